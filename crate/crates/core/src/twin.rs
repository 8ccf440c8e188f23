//! Twin networks: counterfactual queries as feed-forward inference.
//!
//! A twin network duplicates a model's observables (starred copies) while
//! both halves keep the *same* latent parents; the counterfactual
//! intervention is applied to the starred half only. A counterfactual query
//! then becomes an ordinary conditional query on the joint graph: condition
//! on factual evidence, read the event off the starred half.
//!
//! [`query_counterfactual_aap`] answers the same query by the classic
//! abduction-action-prediction procedure. The two paths are independent
//! implementations and cross-validate each other; [`equivalence_sweep`]
//! runs that comparison over randomized models.

use std::time::{Duration, Instant};

use crate::rng::StreamRng;
use crate::scm::{
    event_eq, Assignment, Event, Scm, ScmBuilder, ScmError, Value, VarId, ZERO_EVIDENCE_EPS,
};

/// Suffix used for duplicated observables.
const STAR: &str = "*";

fn starred(name: &VarId) -> VarId {
    VarId::from(format!("{name}{STAR}"))
}

/// Factual and counterfactual halves over shared latents.
///
/// The counterfactual half's observables carry a `*` suffix; its latent set
/// is identical (same names, same priors) to the factual half, so a single
/// noise assignment drives both.
pub struct TwinNetwork {
    factual: Scm,
    counterfactual: Scm,
    star_map: Vec<(VarId, VarId)>,
    cf_interventions: Assignment,
}

/// `P(event on starred half | evidence on factual half, do(cf) on starred half)`.
///
/// `cf_do` and `event` are written with base variable names; the starring is
/// internal to the twin construction.
#[derive(Clone)]
pub struct CounterfactualQuery {
    pub evidence: Assignment,
    pub cf_do: Assignment,
    pub event: Event,
}

/// Duplicate `scm` into a twin network and intervene on the starred copies
/// named in `cf_do` (their incoming edges drop, their mechanisms become
/// constants).
pub fn build_twin(scm: &Scm, cf_do: &Assignment) -> Result<TwinNetwork, ScmError> {
    let mut builder = ScmBuilder::new();
    for latent in scm.latents() {
        match scm.latent_prior(latent).expect("declared latent") {
            crate::scm::NoisePrior::Categorical(support) => {
                builder = builder.latent(latent.as_str(), support);
            }
            crate::scm::NoisePrior::Continuous => {
                builder = builder.latent_continuous(latent.as_str());
            }
        }
    }
    let mut star_map = Vec::with_capacity(scm.observable_count());
    for name in scm.topological_order() {
        let eq = scm.equation(name).expect("equation per observable");
        let star_name = starred(name);
        let star_parents: Vec<String> = eq.parents.iter().map(|p| starred(p).as_str().to_string()).collect();
        let star_parent_refs: Vec<&str> = star_parents.iter().map(String::as_str).collect();
        let mech = eq.clone();
        builder = builder.observable(
            star_name.as_str(),
            &star_parent_refs,
            eq.noise.as_str(),
            &eq.domain,
            move |pa, u| mech.apply(pa, u),
        );
        star_map.push((name.clone(), star_name));
    }
    let counterfactual = builder.build()?;

    // Validate targets against the base model, then star them.
    let mut starred_do = Assignment::new();
    for (name, value) in cf_do.iter() {
        if scm.equation(name).is_none() {
            return Err(if scm.latent_prior(name).is_some() {
                ScmError::LatentIntervention(name.clone())
            } else {
                ScmError::UnknownVariable(name.clone())
            });
        }
        starred_do.insert(starred(name), value);
    }
    let counterfactual = counterfactual.apply_do(&starred_do)?;

    Ok(TwinNetwork {
        factual: scm.clone(),
        counterfactual,
        star_map,
        cf_interventions: cf_do.clone(),
    })
}

impl TwinNetwork {
    pub fn factual(&self) -> &Scm {
        &self.factual
    }

    pub fn counterfactual(&self) -> &Scm {
        &self.counterfactual
    }

    pub fn cf_interventions(&self) -> &Assignment {
        &self.cf_interventions
    }

    /// Total observables across both halves (always twice the base model).
    pub fn observable_count(&self) -> usize {
        self.factual.observable_count() + self.counterfactual.observable_count()
    }

    /// Starred duplicate of a base observable.
    pub fn star_of(&self, name: &VarId) -> Option<&VarId> {
        self.star_map.iter().find(|(b, _)| b == name).map(|(_, s)| s)
    }

    /// Evaluate the counterfactual half and translate names back to base
    /// (star stripped), so events can be written against base names.
    pub fn evaluate_counterfactual(&self, noise: &Assignment) -> Result<Assignment, ScmError> {
        let starred_values = self.counterfactual.evaluate(noise)?;
        Ok(self
            .star_map
            .iter()
            .map(|(base, star)| (base.clone(), starred_values.get(star).expect("starred value")))
            .collect())
    }
}

/// Counterfactual probability via the twin network: enumerate shared
/// latents, condition on the factual half, read the event off the starred
/// half.
pub fn query_counterfactual_twin(
    twin: &TwinNetwork,
    query: &CounterfactualQuery,
) -> Result<f64, ScmError> {
    let mut joint = 0.0f64;
    let mut evidence_mass = 0.0f64;
    for (noise, prob) in twin.factual.enumerate_latents()? {
        let factual_values = twin.factual.evaluate(&noise)?;
        if !query.evidence.satisfied_by(&factual_values) {
            continue;
        }
        evidence_mass += prob;
        let cf_values = twin.evaluate_counterfactual(&noise)?;
        if (query.event)(&cf_values) {
            joint += prob;
        }
    }
    if evidence_mass <= ZERO_EVIDENCE_EPS {
        return Err(ScmError::ZeroEvidence {
            min_prob: ZERO_EVIDENCE_EPS,
        });
    }
    Ok(joint / evidence_mass)
}

/// The same query by abduction (posterior over latents given evidence),
/// action (apply `do` to the base model) and prediction (event expectation
/// under the posterior).
pub fn query_counterfactual_aap(scm: &Scm, query: &CounterfactualQuery) -> Result<f64, ScmError> {
    let mut posterior: Vec<(Assignment, f64)> = Vec::new();
    let mut evidence_mass = 0.0f64;
    for (noise, prob) in scm.enumerate_latents()? {
        let values = scm.evaluate(&noise)?;
        if query.evidence.satisfied_by(&values) {
            evidence_mass += prob;
            posterior.push((noise, prob));
        }
    }
    if evidence_mass <= ZERO_EVIDENCE_EPS {
        return Err(ScmError::ZeroEvidence {
            min_prob: ZERO_EVIDENCE_EPS,
        });
    }
    let submodel = scm.apply_do(&query.cf_do)?;
    let mut expectation = 0.0f64;
    for (noise, prob) in posterior {
        if (query.event)(&submodel.evaluate(&noise)?) {
            expectation += prob;
        }
    }
    Ok(expectation / evidence_mass)
}

// ---------------------------------------------------------------------------
// Randomized equivalence sweep
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct SweepConfig {
    pub models: usize,
    pub queries_per_model: usize,
    pub seed: u64,
    /// Observables per model drawn from `2..=max_observables`.
    pub max_observables: usize,
    /// Latent/observable domain sizes drawn from `2..=max_domain`.
    pub max_domain: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            models: 100,
            queries_per_model: 5,
            seed: 1,
            max_observables: 6,
            max_domain: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub models: usize,
    pub queries: usize,
    pub max_deviation: f64,
    pub twin_time: Duration,
    pub aap_time: Duration,
}

/// A random DAG model: each observable picks parents among earlier ones,
/// mechanisms are random lookup tables, priors are random positive
/// categoricals.
pub fn random_scm(rng: &mut StreamRng, max_observables: usize, max_domain: usize) -> Scm {
    let n_obs = 2 + rng.below(max_observables - 1);
    let mut builder = ScmBuilder::new();
    let mut domains: Vec<usize> = Vec::with_capacity(n_obs);

    for i in 0..n_obs {
        let dom = 2 + rng.below(max_domain - 1);
        let mut probs: Vec<f64> = (0..dom).map(|_| rng.uniform(0.05, 1.0)).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        // Nudge the last entry so the sum is exactly 1 in f64.
        let head: f64 = probs[..dom - 1].iter().sum();
        probs[dom - 1] = 1.0 - head;
        let support: Vec<(Value, f64)> = probs
            .into_iter()
            .enumerate()
            .map(|(v, p)| (v as Value, p))
            .collect();
        builder = builder.latent(&format!("U{i}"), &support);
        domains.push(dom);
    }

    for i in 0..n_obs {
        let n_parents = if i == 0 { 0 } else { rng.below(i.min(3) + 1) };
        let mut pool: Vec<usize> = (0..i).collect();
        let mut parents: Vec<usize> = Vec::with_capacity(n_parents);
        for _ in 0..n_parents {
            parents.push(pool.swap_remove(rng.below(pool.len())));
        }
        parents.sort_unstable();
        let parent_names: Vec<String> = parents.iter().map(|&p| format!("V{p}")).collect();
        let parent_refs: Vec<&str> = parent_names.iter().map(String::as_str).collect();

        let out_dom = domains[i];
        let noise_dom = domains[i];
        let parent_doms: Vec<usize> = parents.iter().map(|&p| domains[p]).collect();
        let table_len = parent_doms.iter().product::<usize>() * noise_dom;
        let table: Vec<Value> = (0..table_len).map(|_| rng.below(out_dom) as Value).collect();
        let parent_doms_for_mech = parent_doms.clone();
        let mech = move |pa: &[Value], u: Value| -> Value {
            let mut idx = 0usize;
            for (v, d) in pa.iter().zip(&parent_doms_for_mech) {
                idx = idx * d + *v as usize;
            }
            idx = idx * noise_dom + u as usize;
            table[idx]
        };
        let domain: Vec<Value> = (0..out_dom as Value).collect();
        builder = builder.observable(&format!("V{i}"), &parent_refs, &format!("U{i}"), &domain, mech);
    }
    builder.build().expect("random model is valid by construction")
}

/// Draw a well-posed query: evidence comes from a realized world (so its
/// probability is positive), the intervention and event target random
/// observables.
pub fn random_query(rng: &mut StreamRng, scm: &Scm) -> CounterfactualQuery {
    let obs: Vec<VarId> = scm.topological_order().to_vec();
    // Realize a world by sampling each latent from its prior.
    let mut noise = Assignment::new();
    for latent in scm.latents() {
        if let Some(crate::scm::NoisePrior::Categorical(support)) = scm.latent_prior(latent) {
            let mut u = rng.uniform(0.0, 1.0);
            let mut chosen = support[support.len() - 1].0;
            for (v, p) in support {
                if u < *p {
                    chosen = *v;
                    break;
                }
                u -= p;
            }
            noise.insert(latent.clone(), chosen);
        }
    }
    let world = scm.evaluate(&noise).expect("complete noise");

    let n_evidence = 1 + rng.below(obs.len());
    let picked = rng.permutation(obs.len());
    let mut evidence = Assignment::new();
    for &i in picked.iter().take(n_evidence) {
        evidence.insert(obs[i].clone(), world.get(&obs[i]).unwrap());
    }

    let n_do = 1 + rng.below(2.min(obs.len()));
    let picked = rng.permutation(obs.len());
    let mut cf_do = Assignment::new();
    for &i in picked.iter().take(n_do) {
        let domain = &scm.equation(&obs[i]).unwrap().domain;
        cf_do.insert(obs[i].clone(), domain[rng.below(domain.len())]);
    }

    let target = &obs[rng.below(obs.len())];
    let domain = &scm.equation(target).unwrap().domain;
    let event = event_eq(target.clone(), domain[rng.below(domain.len())]);

    CounterfactualQuery {
        evidence,
        cf_do,
        event,
    }
}

/// Compare the twin path against abduction-action-prediction over random
/// models and queries; reports the maximum absolute deviation and the wall
/// time spent in each path.
pub fn equivalence_sweep(cfg: SweepConfig) -> Result<SweepReport, ScmError> {
    let mut rng = StreamRng::new(cfg.seed, "twin-sweep");
    let mut max_dev = 0.0f64;
    let mut queries = 0usize;
    let mut twin_time = Duration::ZERO;
    let mut aap_time = Duration::ZERO;

    for _ in 0..cfg.models {
        let scm = random_scm(&mut rng, cfg.max_observables, cfg.max_domain);
        for _ in 0..cfg.queries_per_model {
            let query = random_query(&mut rng, &scm);

            let t0 = Instant::now();
            let twin = build_twin(&scm, &query.cf_do)?;
            let via_twin = query_counterfactual_twin(&twin, &query)?;
            twin_time += t0.elapsed();

            let t1 = Instant::now();
            let via_aap = query_counterfactual_aap(&scm, &query)?;
            aap_time += t1.elapsed();

            max_dev = max_dev.max((via_twin - via_aap).abs());
            queries += 1;
        }
    }
    Ok(SweepReport {
        models: cfg.models,
        queries,
        max_deviation: max_dev,
        twin_time,
        aap_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::event_not;

    fn xor_model() -> Scm {
        Scm::builder()
            .latent("U_X", &[(0, 0.5), (1, 0.5)])
            .latent("U_Y", &[(0, 0.7), (1, 0.3)])
            .observable("X", &[], "U_X", &[0, 1], |_, u| u)
            .observable("Y", &["X"], "U_Y", &[0, 1], |pa, u| pa[0] ^ u)
            .build()
            .unwrap()
    }

    fn chain_model() -> Scm {
        Scm::builder()
            .latent("U_Z", &[(0, 0.6), (1, 0.4)])
            .latent("U_X", &[(0, 0.7), (1, 0.3)])
            .latent("U_Y", &[(0, 0.9), (1, 0.1)])
            .observable("Z", &[], "U_Z", &[0, 1], |_, u| u)
            .observable("X", &["Z"], "U_X", &[0, 1], |pa, u| pa[0] ^ u)
            .observable("Y", &["X"], "U_Y", &[0, 1], |pa, u| pa[0] ^ u)
            .build()
            .unwrap()
    }

    #[test]
    fn twin_doubles_observables_and_shares_latents() {
        let scm = xor_model();
        let twin = build_twin(&scm, &Assignment::new()).unwrap();
        assert_eq!(twin.observable_count(), 4);
        let base_latents: Vec<_> = scm.latents().cloned().collect();
        let cf_latents: Vec<_> = twin.counterfactual().latents().cloned().collect();
        assert_eq!(base_latents, cf_latents);
        assert_eq!(twin.star_of(&VarId::from("Y")).unwrap().as_str(), "Y*");
    }

    #[test]
    fn empty_cf_do_makes_halves_identical() {
        let scm = chain_model();
        let twin = build_twin(&scm, &Assignment::new()).unwrap();
        for (noise, _) in scm.enumerate_latents().unwrap() {
            let f = scm.evaluate(&noise).unwrap();
            let c = twin.evaluate_counterfactual(&noise).unwrap();
            assert_eq!(f, c);
        }
    }

    #[test]
    fn starred_intervened_variable_has_no_parents() {
        let scm = chain_model();
        let twin = build_twin(&scm, &Assignment::new().with("X", 0)).unwrap();
        let eq = twin
            .counterfactual()
            .equation(&VarId::from("X*"))
            .unwrap();
        assert!(eq.parents.is_empty());
        // The unintervened starred variables keep their starred parents.
        let eq_y = twin.counterfactual().equation(&VarId::from("Y*")).unwrap();
        assert_eq!(eq_y.parents, vec![VarId::from("X*")]);
    }

    #[test]
    fn xor_abduction_pins_the_noise() {
        // Evidence {X=1, Y=1} forces U_Y=0, so under do(X*=0): Y* = 0 xor 0 = 0.
        let scm = xor_model();
        let query = CounterfactualQuery {
            evidence: Assignment::new().with("X", 1).with("Y", 1),
            cf_do: Assignment::new().with("X", 0),
            event: event_eq("Y", 1),
        };
        let twin = build_twin(&scm, &query.cf_do).unwrap();
        let p_twin = query_counterfactual_twin(&twin, &query).unwrap();
        let p_aap = query_counterfactual_aap(&scm, &query).unwrap();
        assert_eq!(p_twin, 0.0);
        assert_eq!(p_aap, 0.0);
    }

    #[test]
    fn no_evidence_reduces_to_interventional() {
        let scm = chain_model();
        let cf_do = Assignment::new().with("X", 0);
        let query = CounterfactualQuery {
            evidence: Assignment::new(),
            cf_do: cf_do.clone(),
            event: event_eq("Y", 1),
        };
        let twin = build_twin(&scm, &cf_do).unwrap();
        let p_twin = query_counterfactual_twin(&twin, &query).unwrap();
        let p_int = scm.query_interventional(&cf_do, &event_eq("Y", 1)).unwrap();
        assert!((p_twin - p_int).abs() < 1e-12);
    }

    #[test]
    fn contradictory_evidence_is_zero_evidence() {
        // Y = X exactly; evidence X=1, Y=0 is impossible.
        let scm = Scm::builder()
            .latent("U_X", &[(0, 0.5), (1, 0.5)])
            .latent("U_Y", &[(0, 1.0)])
            .observable("X", &[], "U_X", &[0, 1], |_, u| u)
            .observable("Y", &["X"], "U_Y", &[0, 1], |pa, _| pa[0])
            .build()
            .unwrap();
        let query = CounterfactualQuery {
            evidence: Assignment::new().with("X", 1).with("Y", 0),
            cf_do: Assignment::new().with("X", 0),
            event: event_eq("Y", 0),
        };
        let twin = build_twin(&scm, &query.cf_do).unwrap();
        assert!(matches!(
            query_counterfactual_twin(&twin, &query),
            Err(ScmError::ZeroEvidence { .. })
        ));
        assert!(matches!(
            query_counterfactual_aap(&scm, &query),
            Err(ScmError::ZeroEvidence { .. })
        ));
    }

    #[test]
    fn aap_prediction_on_exogenous_copy_equals_posterior() {
        // Event on X* where X is exogenous and not intervened: the prediction
        // step is the identity, so the result is the posterior P(X=1 | e).
        let scm = xor_model();
        let query = CounterfactualQuery {
            evidence: Assignment::new().with("Y", 1),
            cf_do: Assignment::new(),
            event: event_eq("X", 1),
        };
        let p = query_counterfactual_aap(&scm, &query).unwrap();
        // P(X=1 | Y=1) by Bayes: P(Y=1|X=1)P(X=1) / P(Y=1)
        // = (0.7 * 0.5) / (0.5*0.3 + 0.5*0.7) = 0.35 / 0.5 = 0.7
        assert!((p - 0.7).abs() < 1e-12);
    }

    #[test]
    fn consistency_when_do_matches_evidence() {
        // If the counterfactual do equals the evidenced factual value, the
        // counterfactual event probability equals the factual conditional.
        let scm = chain_model();
        let query = CounterfactualQuery {
            evidence: Assignment::new().with("X", 1),
            cf_do: Assignment::new().with("X", 1),
            event: event_eq("Y", 1),
        };
        let twin = build_twin(&scm, &query.cf_do).unwrap();
        let p_cf = query_counterfactual_twin(&twin, &query).unwrap();

        // Factual conditional P(Y=1 | X=1) by enumeration.
        let mut num = 0.0;
        let mut den = 0.0;
        for (noise, prob) in scm.enumerate_latents().unwrap() {
            let v = scm.evaluate(&noise).unwrap();
            if v.get_str("X") == Some(1) {
                den += prob;
                if v.get_str("Y") == Some(1) {
                    num += prob;
                }
            }
        }
        assert!((p_cf - num / den).abs() < 1e-12);
    }

    #[test]
    fn marginalization_event_plus_complement_is_one() {
        let scm = chain_model();
        let query_base = CounterfactualQuery {
            evidence: Assignment::new().with("Y", 1),
            cf_do: Assignment::new().with("X", 0),
            event: event_eq("Y", 1),
        };
        let twin = build_twin(&scm, &query_base.cf_do).unwrap();
        let p = query_counterfactual_twin(&twin, &query_base).unwrap();
        let complement = CounterfactualQuery {
            event: event_not(query_base.event.clone()),
            ..query_base
        };
        let twin2 = build_twin(&scm, &complement.cf_do).unwrap();
        let q = query_counterfactual_twin(&twin2, &complement).unwrap();
        assert!((p + q - 1.0).abs() < 1e-9);
    }

    #[test]
    fn small_equivalence_sweep() {
        let report = equivalence_sweep(SweepConfig {
            models: 20,
            queries_per_model: 3,
            seed: 42,
            ..SweepConfig::default()
        })
        .unwrap();
        assert_eq!(report.queries, 60);
        assert!(
            report.max_deviation <= 1e-9,
            "max deviation {}",
            report.max_deviation
        );
    }
}
