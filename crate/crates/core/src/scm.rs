//! Discrete structural causal models with exact evaluation and interventions.
//!
//! A model is a DAG over latent noise variables and observable variables.
//! Each observable `v` has one structural equation `v = f(parents, noise)`
//! with a deterministic mechanism over a declared finite domain; each latent
//! has a categorical prior. Interventions (`do`) replace an equation by a
//! constant with no parents, which is both the graph surgery (incoming edges
//! removed) and the submodel semantics.
//!
//! Values are integers; the continuous case is handled by the neural twin in
//! [`crate::nn`], not here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Observable/latent values of the exact core.
pub type Value = i64;

/// Interned variable name; clones are cheap.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(Arc<str>);

impl VarId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        Self(Arc::from(s))
    }
}

impl From<String> for VarId {
    fn from(s: String) -> Self {
        Self(Arc::from(s.as_str()))
    }
}

impl fmt::Debug for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Latent,
    Observable,
}

/// A variable together with its role in the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub id: VarId,
    pub kind: VarKind,
}

#[derive(Debug, Error)]
pub enum ScmError {
    #[error("causal structure contains a cycle through `{0}`")]
    Cycle(VarId),
    #[error("variable `{0}` is referenced but never declared (or has the wrong kind)")]
    DanglingVariable(VarId),
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(VarId),
    #[error("invalid prior for `{var}`: {reason}")]
    InvalidPrior { var: VarId, reason: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(VarId),
    #[error("cannot intervene on latent variable `{0}`")]
    LatentIntervention(VarId),
    #[error("noise assignment is missing latent `{0}`")]
    IncompleteNoise(VarId),
    #[error("latent `{0}` has a non-finite domain; exact enumeration is impossible")]
    InfiniteDomain(VarId),
    #[error("joint latent space has {states} states, above the enumeration cap of {cap}")]
    Explosion { states: u128, cap: u128 },
    #[error("evidence has probability below {min_prob}; the query conditions on a null event")]
    ZeroEvidence { min_prob: f64 },
}

/// Evidence below this mass is treated as a null event.
pub const ZERO_EVIDENCE_EPS: f64 = 1e-15;
/// Joint latent states beyond this cap refuse to enumerate.
pub const ENUMERATION_CAP: u128 = 1 << 20;
/// Input priors must sum to 1 within this tolerance.
pub const PRIOR_SUM_EPS: f64 = 1e-12;

/// A map from variables to values. Iteration order is the variable order,
/// so downstream computations are deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment(BTreeMap<VarId, Value>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Chainable insert.
    pub fn with(mut self, var: impl Into<VarId>, value: Value) -> Self {
        self.0.insert(var.into(), value);
        self
    }

    pub fn insert(&mut self, var: impl Into<VarId>, value: Value) {
        self.0.insert(var.into(), value);
    }

    pub fn get(&self, var: &VarId) -> Option<Value> {
        self.0.get(var).copied()
    }

    pub fn get_str(&self, var: &str) -> Option<Value> {
        self.0.get(&VarId::from(var)).copied()
    }

    pub fn contains(&self, var: &VarId) -> bool {
        self.0.contains_key(var)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarId, Value)> {
        self.0.iter().map(|(k, &v)| (k, v))
    }

    /// True when every binding here also holds in `other`.
    pub fn satisfied_by(&self, other: &Assignment) -> bool {
        self.iter().all(|(k, v)| other.get(k) == Some(v))
    }
}

impl FromIterator<(VarId, Value)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (VarId, Value)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Predicate over an assignment of observable values.
pub type Event = Arc<dyn Fn(&Assignment) -> bool + Send + Sync>;

/// Event `var == value`.
pub fn event_eq(var: impl Into<VarId>, value: Value) -> Event {
    let var = var.into();
    Arc::new(move |a: &Assignment| a.get(&var) == Some(value))
}

/// Negation of an event.
pub fn event_not(event: Event) -> Event {
    Arc::new(move |a: &Assignment| !event(a))
}

type Mechanism = Arc<dyn Fn(&[Value], Value) -> Value + Send + Sync>;

/// Prior of one latent variable.
#[derive(Clone)]
pub enum NoisePrior {
    /// Finite support with probabilities.
    Categorical(Vec<(Value, f64)>),
    /// Declared but not enumerable; present so models can document latents
    /// whose inference is delegated to the neural twin.
    Continuous,
}

impl fmt::Debug for NoisePrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Categorical(support) => write!(f, "Categorical({support:?})"),
            Self::Continuous => write!(f, "Continuous"),
        }
    }
}

/// One structural equation `target = mechanism(parents, noise)`.
#[derive(Clone)]
pub struct StructuralEquation {
    pub target: VarId,
    pub parents: Vec<VarId>,
    pub noise: VarId,
    pub domain: Vec<Value>,
    mechanism: Mechanism,
}

impl StructuralEquation {
    pub fn apply(&self, parent_values: &[Value], noise: Value) -> Value {
        (self.mechanism)(parent_values, noise)
    }
}

impl fmt::Debug for StructuralEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = f({:?}, {})", self.target, self.parents, self.noise)
    }
}

/// Builder for [`Scm`]; validation happens in [`ScmBuilder::build`].
#[derive(Default)]
pub struct ScmBuilder {
    latents: Vec<(VarId, NoisePrior)>,
    equations: Vec<StructuralEquation>,
}

impl ScmBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declare a latent with a categorical prior.
    pub fn latent(mut self, name: &str, prior: &[(Value, f64)]) -> Self {
        self.latents
            .push((VarId::from(name), NoisePrior::Categorical(prior.to_vec())));
        self
    }

    /// Declare a latent whose distribution is not enumerable.
    pub fn latent_continuous(mut self, name: &str) -> Self {
        self.latents.push((VarId::from(name), NoisePrior::Continuous));
        self
    }

    /// Declare an observable with its equation.
    pub fn observable(
        mut self,
        name: &str,
        parents: &[&str],
        noise: &str,
        domain: &[Value],
        mechanism: impl Fn(&[Value], Value) -> Value + Send + Sync + 'static,
    ) -> Self {
        self.equations.push(StructuralEquation {
            target: VarId::from(name),
            parents: parents.iter().map(|&p| VarId::from(p)).collect(),
            noise: VarId::from(noise),
            domain: domain.to_vec(),
            mechanism: Arc::new(mechanism),
        });
        self
    }

    /// Validate and build: unique names, declared references, acyclic parent
    /// graph (topological order is computed and stored), normalized priors.
    pub fn build(self) -> Result<Scm, ScmError> {
        let mut seen: BTreeSet<VarId> = BTreeSet::new();
        for (name, _) in &self.latents {
            if !seen.insert(name.clone()) {
                return Err(ScmError::DuplicateVariable(name.clone()));
            }
        }
        for eq in &self.equations {
            if !seen.insert(eq.target.clone()) {
                return Err(ScmError::DuplicateVariable(eq.target.clone()));
            }
        }

        let latent_names: BTreeSet<VarId> = self.latents.iter().map(|(n, _)| n.clone()).collect();
        let obs_names: BTreeSet<VarId> = self.equations.iter().map(|e| e.target.clone()).collect();

        for eq in &self.equations {
            for p in &eq.parents {
                if !obs_names.contains(p) {
                    return Err(ScmError::DanglingVariable(p.clone()));
                }
            }
            if !latent_names.contains(&eq.noise) {
                return Err(ScmError::DanglingVariable(eq.noise.clone()));
            }
        }

        for (name, prior) in &self.latents {
            if let NoisePrior::Categorical(support) = prior {
                if support.is_empty() {
                    return Err(ScmError::InvalidPrior {
                        var: name.clone(),
                        reason: "empty support".into(),
                    });
                }
                if let Some((v, p)) = support.iter().find(|(_, p)| *p < 0.0 || !p.is_finite()) {
                    return Err(ScmError::InvalidPrior {
                        var: name.clone(),
                        reason: format!("P({name}={v}) = {p} is not a probability"),
                    });
                }
                let total: f64 = support.iter().map(|(_, p)| p).sum();
                if (total - 1.0).abs() > PRIOR_SUM_EPS {
                    return Err(ScmError::InvalidPrior {
                        var: name.clone(),
                        reason: format!("probabilities sum to {total}, not 1"),
                    });
                }
                let values: BTreeSet<Value> = support.iter().map(|(v, _)| *v).collect();
                if values.len() != support.len() {
                    return Err(ScmError::InvalidPrior {
                        var: name.clone(),
                        reason: "repeated support value".into(),
                    });
                }
            }
        }

        // Kahn's algorithm over the observable parent graph.
        let mut equations: BTreeMap<VarId, StructuralEquation> = BTreeMap::new();
        for eq in self.equations {
            equations.insert(eq.target.clone(), eq);
        }
        let mut indegree: BTreeMap<VarId, usize> = obs_names.iter().map(|n| (n.clone(), 0)).collect();
        let mut children: BTreeMap<VarId, Vec<VarId>> = BTreeMap::new();
        for eq in equations.values() {
            for p in &eq.parents {
                *indegree.get_mut(&eq.target).unwrap() += 1;
                children.entry(p.clone()).or_default().push(eq.target.clone());
            }
        }
        let mut ready: Vec<VarId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(n, _)| n.clone())
            .collect();
        let mut topo: Vec<VarId> = Vec::with_capacity(equations.len());
        while let Some(next) = ready.pop() {
            topo.push(next.clone());
            if let Some(kids) = children.get(&next) {
                for k in kids {
                    let d = indegree.get_mut(k).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(k.clone());
                    }
                }
            }
        }
        if topo.len() != equations.len() {
            let stuck = indegree
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(n, _)| n.clone())
                .expect("cycle implies positive indegree");
            return Err(ScmError::Cycle(stuck));
        }

        Ok(Scm {
            latents: self.latents,
            equations,
            topo_order: topo,
            interventions: Assignment::new(),
        })
    }
}

/// A validated structural causal model. Immutable after build; interventions
/// produce new models.
#[derive(Clone)]
pub struct Scm {
    latents: Vec<(VarId, NoisePrior)>,
    equations: BTreeMap<VarId, StructuralEquation>,
    topo_order: Vec<VarId>,
    interventions: Assignment,
}

impl Scm {
    pub fn builder() -> ScmBuilder {
        ScmBuilder::new()
    }

    pub fn latents(&self) -> impl Iterator<Item = &VarId> {
        self.latents.iter().map(|(n, _)| n)
    }

    pub fn latent_prior(&self, name: &VarId) -> Option<&NoisePrior> {
        self.latents.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    /// Observables in topological (evaluation) order.
    pub fn topological_order(&self) -> &[VarId] {
        &self.topo_order
    }

    pub fn equation(&self, name: &VarId) -> Option<&StructuralEquation> {
        self.equations.get(name)
    }

    pub fn variables(&self) -> Vec<Variable> {
        let mut vars: Vec<Variable> = self
            .latents
            .iter()
            .map(|(n, _)| Variable {
                id: n.clone(),
                kind: VarKind::Latent,
            })
            .collect();
        vars.extend(self.topo_order.iter().map(|n| Variable {
            id: n.clone(),
            kind: VarKind::Observable,
        }));
        vars
    }

    pub fn observable_count(&self) -> usize {
        self.equations.len()
    }

    pub fn interventions(&self) -> &Assignment {
        &self.interventions
    }

    pub fn is_intervened(&self, name: &VarId) -> bool {
        self.interventions.contains(name)
    }

    /// The submodel `do(interventions)`: each target's equation becomes the
    /// constant, with no parents. `self` is unmodified.
    pub fn apply_do(&self, interventions: &Assignment) -> Result<Scm, ScmError> {
        let mut out = self.clone();
        for (name, value) in interventions.iter() {
            if self.latents.iter().any(|(n, _)| n == name) {
                return Err(ScmError::LatentIntervention(name.clone()));
            }
            let eq = out
                .equations
                .get_mut(name)
                .ok_or_else(|| ScmError::UnknownVariable(name.clone()))?;
            eq.parents = Vec::new();
            eq.mechanism = Arc::new(move |_: &[Value], _: Value| value);
            out.interventions.insert(name.clone(), value);
        }
        Ok(out)
    }

    /// Deterministic forward pass: every observable in topological order.
    pub fn evaluate(&self, noise: &Assignment) -> Result<Assignment, ScmError> {
        for (name, _) in &self.latents {
            if !noise.contains(name) {
                return Err(ScmError::IncompleteNoise(name.clone()));
            }
        }
        let mut values = Assignment::new();
        for name in &self.topo_order {
            let eq = &self.equations[name];
            let parent_values: Vec<Value> = eq
                .parents
                .iter()
                .map(|p| values.get(p).expect("topological order"))
                .collect();
            let noise_value = noise.get(&eq.noise).expect("checked above");
            values.insert(name.clone(), eq.apply(&parent_values, noise_value));
        }
        Ok(values)
    }

    /// Every joint latent assignment with its product prior probability.
    /// Zero-probability support values are included and contribute 0.
    pub fn enumerate_latents(&self) -> Result<Vec<(Assignment, f64)>, ScmError> {
        let mut supports: Vec<(&VarId, &[(Value, f64)])> = Vec::with_capacity(self.latents.len());
        let mut states: u128 = 1;
        for (name, prior) in &self.latents {
            match prior {
                NoisePrior::Categorical(support) => {
                    states = states.saturating_mul(support.len() as u128);
                    supports.push((name, support));
                }
                NoisePrior::Continuous => return Err(ScmError::InfiniteDomain(name.clone())),
            }
        }
        if states > ENUMERATION_CAP {
            return Err(ScmError::Explosion {
                states,
                cap: ENUMERATION_CAP,
            });
        }
        let mut out: Vec<(Assignment, f64)> = vec![(Assignment::new(), 1.0)];
        for (name, support) in supports {
            let mut next = Vec::with_capacity(out.len() * support.len());
            for (assignment, prob) in &out {
                for (value, p) in support {
                    next.push((assignment.clone().with(name.clone(), *value), prob * p));
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Exact `P(event | do(interventions))` by full enumeration.
    pub fn query_interventional(
        &self,
        interventions: &Assignment,
        event: &Event,
    ) -> Result<f64, ScmError> {
        let submodel = self.apply_do(interventions)?;
        let mut total = 0.0;
        for (noise, prob) in submodel.enumerate_latents()? {
            if event(&submodel.evaluate(&noise)?) {
                total += prob;
            }
        }
        Ok(total)
    }

    /// Exact observational `P(event)`.
    pub fn query_observational(&self, event: &Event) -> Result<f64, ScmError> {
        self.query_interventional(&Assignment::new(), event)
    }
}

impl fmt::Debug for Scm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scm")
            .field("latents", &self.latents.iter().map(|(n, _)| n).collect::<Vec<_>>())
            .field("order", &self.topo_order)
            .field("interventions", &self.interventions)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor_model(p_noise: f64) -> Scm {
        // X <- U_X; Y = X xor U_Y
        Scm::builder()
            .latent("U_X", &[(0, 0.5), (1, 0.5)])
            .latent("U_Y", &[(0, 1.0 - p_noise), (1, p_noise)])
            .observable("X", &[], "U_X", &[0, 1], |_, u| u)
            .observable("Y", &["X"], "U_Y", &[0, 1], |pa, u| pa[0] ^ u)
            .build()
            .unwrap()
    }

    #[test]
    fn smallest_legal_model() {
        let scm = Scm::builder()
            .latent("U_Y", &[(0, 0.7), (1, 0.3)])
            .observable("Y", &[], "U_Y", &[0, 1], |_, u| u)
            .build()
            .unwrap();
        let vars = scm.variables();
        assert_eq!(vars.len(), 2);
        assert_eq!(vars[0].id.as_str(), "U_Y");
        assert_eq!(vars[0].kind, VarKind::Latent);
        assert_eq!(scm.topological_order(), &[VarId::from("Y")]);
    }

    #[test]
    fn cycle_is_rejected() {
        let err = Scm::builder()
            .latent("U_X", &[(0, 1.0)])
            .latent("U_Y", &[(0, 1.0)])
            .observable("X", &["Y"], "U_X", &[0], |pa, _| pa[0])
            .observable("Y", &["X"], "U_Y", &[0], |pa, _| pa[0])
            .build()
            .unwrap_err();
        assert!(matches!(err, ScmError::Cycle(_)));
    }

    #[test]
    fn dangling_parent_is_rejected() {
        let err = Scm::builder()
            .latent("U_Y", &[(0, 1.0)])
            .observable("Y", &["ghost"], "U_Y", &[0], |pa, _| pa[0])
            .build()
            .unwrap_err();
        assert!(matches!(err, ScmError::DanglingVariable(_)));
    }

    #[test]
    fn invalid_priors_are_rejected() {
        let negative = Scm::builder()
            .latent("U", &[(0, -0.1), (1, 1.1)])
            .observable("Y", &[], "U", &[0, 1], |_, u| u)
            .build()
            .unwrap_err();
        assert!(matches!(negative, ScmError::InvalidPrior { .. }));

        let not_normalized = Scm::builder()
            .latent("U", &[(0, 0.5), (1, 0.4)])
            .observable("Y", &[], "U", &[0, 1], |_, u| u)
            .build()
            .unwrap_err();
        assert!(matches!(not_normalized, ScmError::InvalidPrior { .. }));
    }

    fn chain_model() -> Scm {
        // Z -> X -> Y, all binary, with noises flipping each step.
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
    fn chain_enumerates_eight_latent_assignments() {
        let scm = chain_model();
        let states = scm.enumerate_latents().unwrap();
        assert_eq!(states.len(), 8);
        let total: f64 = states.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn do_forces_value_for_every_noise_draw() {
        let scm = Scm::builder()
            .latent("U_X", &[(0, 0.5), (1, 0.5)])
            .observable("X", &[], "U_X", &[0, 1], |_, u| u)
            .build()
            .unwrap();
        let forced = scm.apply_do(&Assignment::new().with("X", 1)).unwrap();
        for (noise, _) in forced.enumerate_latents().unwrap() {
            assert_eq!(forced.evaluate(&noise).unwrap().get_str("X"), Some(1));
        }
        // original untouched
        let u0 = Assignment::new().with("U_X", 0);
        assert_eq!(scm.evaluate(&u0).unwrap().get_str("X"), Some(0));
    }

    #[test]
    fn empty_do_is_identity_on_every_noise_assignment() {
        let scm = chain_model();
        let same = scm.apply_do(&Assignment::new()).unwrap();
        for (noise, _) in scm.enumerate_latents().unwrap() {
            assert_eq!(
                scm.evaluate(&noise).unwrap(),
                same.evaluate(&noise).unwrap()
            );
        }
    }

    #[test]
    fn chain_interventional_matches_brute_force_sum() {
        // P(Y=1 | do(X=0)) must equal sum over u of P(Y=1|X=0,u) P(u),
        // computed here directly from the noise priors.
        let scm = chain_model();
        let p = scm
            .query_interventional(&Assignment::new().with("X", 0), &event_eq("Y", 1))
            .unwrap();
        // Y = 0 xor U_Y, so P(Y=1|do(X=0)) = P(U_Y=1) = 0.1, independent of Z.
        assert!((p - 0.1).abs() < 1e-12);
    }

    #[test]
    fn latent_intervention_is_rejected() {
        let scm = chain_model();
        let err = scm.apply_do(&Assignment::new().with("U_X", 1)).unwrap_err();
        assert!(matches!(err, ScmError::LatentIntervention(_)));
        let err = scm.apply_do(&Assignment::new().with("nope", 1)).unwrap_err();
        assert!(matches!(err, ScmError::UnknownVariable(_)));
    }

    #[test]
    fn evaluate_xor_under_do() {
        let scm = xor_model(0.3);
        let forced = scm.apply_do(&Assignment::new().with("X", 1)).unwrap();
        let noise = Assignment::new().with("U_X", 0).with("U_Y", 0);
        assert_eq!(forced.evaluate(&noise).unwrap().get_str("Y"), Some(1));
    }

    #[test]
    fn evaluate_identity_and_determinism() {
        let scm = Scm::builder()
            .latent("U_Y", &[(5, 1.0)])
            .observable("Y", &[], "U_Y", &[5], |_, u| u)
            .build()
            .unwrap();
        let noise = Assignment::new().with("U_Y", 5);
        let a = scm.evaluate(&noise).unwrap();
        let b = scm.evaluate(&noise).unwrap();
        assert_eq!(a.get_str("Y"), Some(5));
        assert_eq!(a, b);
    }

    #[test]
    fn evaluate_requires_complete_noise() {
        let scm = xor_model(0.3);
        let err = scm.evaluate(&Assignment::new().with("U_X", 0)).unwrap_err();
        assert!(matches!(err, ScmError::IncompleteNoise(_)));
    }

    #[test]
    fn enumerate_two_binary_latents() {
        let scm = Scm::builder()
            .latent("A", &[(0, 0.5), (1, 0.5)])
            .latent("B", &[(0, 0.5), (1, 0.5)])
            .observable("Y", &[], "A", &[0, 1], |_, u| u)
            .build()
            .unwrap();
        let states = scm.enumerate_latents().unwrap();
        assert_eq!(states.len(), 4);
        assert!(states.iter().all(|(_, p)| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn enumerate_ternary_latent() {
        let scm = Scm::builder()
            .latent("U", &[(0, 0.2), (1, 0.3), (2, 0.5)])
            .observable("Y", &[], "U", &[0, 1, 2], |_, u| u)
            .build()
            .unwrap();
        let states = scm.enumerate_latents().unwrap();
        let probs: Vec<f64> = states.iter().map(|(_, p)| *p).collect();
        assert_eq!(probs, vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn enumerate_six_binary_latents_sums_to_one() {
        let mut builder = Scm::builder();
        for i in 0..6 {
            builder = builder.latent(&format!("U{i}"), &[(0, 0.37), (1, 0.63)]);
        }
        let scm = builder
            .observable("Y", &[], "U0", &[0, 1], |_, u| u)
            .build()
            .unwrap();
        let states = scm.enumerate_latents().unwrap();
        assert_eq!(states.len(), 64);
        let total: f64 = states.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn continuous_latent_refuses_enumeration() {
        let scm = Scm::builder()
            .latent_continuous("U")
            .observable("Y", &[], "U", &[0], |_, _| 0)
            .build()
            .unwrap();
        assert!(matches!(
            scm.enumerate_latents().unwrap_err(),
            ScmError::InfiniteDomain(_)
        ));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let mut builder = Scm::builder();
        for i in 0..21 {
            builder = builder.latent(&format!("U{i}"), &[(0, 0.5), (1, 0.5)]);
        }
        let scm = builder
            .observable("Y", &[], "U0", &[0, 1], |_, u| u)
            .build()
            .unwrap();
        assert!(matches!(
            scm.enumerate_latents().unwrap_err(),
            ScmError::Explosion { .. }
        ));
    }

    #[test]
    fn query_identity_do() {
        // Y = X: P(Y=1 | do(X=1)) = 1
        let scm = Scm::builder()
            .latent("U_X", &[(0, 0.5), (1, 0.5)])
            .latent("U_Y", &[(0, 1.0)])
            .observable("X", &[], "U_X", &[0, 1], |_, u| u)
            .observable("Y", &["X"], "U_Y", &[0, 1], |pa, _| pa[0])
            .build()
            .unwrap();
        let p = scm
            .query_interventional(&Assignment::new().with("X", 1), &event_eq("Y", 1))
            .unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn query_xor_with_noise() {
        // Y = X xor U_Y with P(U_Y=1)=0.3: P(Y=1|do(X=1)) = P(U_Y=0) = 0.7
        let scm = xor_model(0.3);
        let p = scm
            .query_interventional(&Assignment::new().with("X", 1), &event_eq("Y", 1))
            .unwrap();
        assert!((p - 0.7).abs() < 1e-12);
    }

    #[test]
    fn empty_do_equals_observational() {
        let scm = chain_model();
        for (var, value) in [("Z", 1), ("X", 0), ("Y", 1)] {
            let via_do = scm
                .query_interventional(&Assignment::new(), &event_eq(var, value))
                .unwrap();
            let direct = scm.query_observational(&event_eq(var, value)).unwrap();
            assert_eq!(via_do, direct);
        }
    }

    #[test]
    fn event_and_complement_sum_to_one() {
        let scm = chain_model();
        let event = event_eq("Y", 1);
        let p = scm.query_observational(&event).unwrap();
        let q = scm.query_observational(&event_not(event)).unwrap();
        assert!((p + q - 1.0).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&p));
    }
}
