//! Exact finite-MDP computations verifying the theory numerically: occupancy
//! measures, the environment inverse posterior, the inverse-dynamics
//! disagreement decomposition, and the policy-regularizer upper bound.
//!
//! Occupancies are converted to proper distributions via a `(1-γ)` factor
//! before any KL so non-negativity holds.

use rand::Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::rng::stream;

/// Finite MDP with dense transition table `T(s'|s,a)`.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Indexed `[s][a][s']`, flattened.
    transition: Vec<f64>,
    pub rho0: Vec<f64>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        rho0: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if transition.len() != n_states * n_actions * n_states || rho0.len() != n_states {
            return Err(Error::contract(
                "transition/rho0 shapes do not match state and action counts",
            ));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::contract("gamma must lie in (0, 1)"));
        }
        let mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            rho0,
            gamma,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let total: f64 = (0..n_states).map(|s2| mdp.t(s, a, s2)).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::contract(format!("T(·|{s},{a}) sums to {total}")));
                }
            }
        }
        let r0: f64 = mdp.rho0.iter().sum();
        if (r0 - 1.0).abs() > 1e-12 || mdp.rho0.iter().any(|&p| p < 0.0) {
            return Err(Error::contract("rho0 must be a distribution"));
        }
        Ok(mdp)
    }

    #[inline]
    pub fn t(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }
}

/// Row-stochastic policy table `π(a|s)`.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::contract("policy table shape mismatch"));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::contract(format!("π(·|{s}) is not a distribution")));
            }
        }
        Ok(TabularPolicy {
            n_states,
            n_actions,
            probs,
        })
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }
}

/// Occupancy measures of a policy. `rho_s` is unnormalized (sums to
/// `1/(1-γ)`); derived tables follow the definitions exactly.
#[derive(Debug, Clone)]
pub struct OccupancyTables {
    pub rho_s: Vec<f64>,
    /// `ρ(s,a) = ρ(s)·π(a|s)`, indexed `[s][a]`.
    pub rho_sa: Vec<f64>,
    /// `ρ(s,s') = Σ_a ρ(s,a)·T(s'|s,a)`, indexed `[s][s']`.
    pub rho_ss: Vec<f64>,
    /// Inverse posterior `ρ(a|s,s')`, indexed `[s][s'][a]`; zero where the
    /// pair `(s,s')` is unreachable under the policy.
    pub rho_a_given_ss: Vec<f64>,
    n_states: usize,
    n_actions: usize,
}

impl OccupancyTables {
    #[inline]
    pub fn posterior(&self, s: usize, s2: usize, a: usize) -> f64 {
        self.rho_a_given_ss[(s * self.n_states + s2) * self.n_actions + a]
    }
}

/// Solves the dense linear system with partial pivoting; sizes here are tiny.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-14 {
            return Err(Error::numeric("singular occupancy system"));
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * x[c];
        }
        x[r] = acc / a[r * n + r];
    }
    Ok(x)
}

/// Exact occupancy tables: `ρ = ρ0 + γ P_πᵀ ρ` solved as a linear system,
/// plus the derived state-action, state-state and inverse-posterior tables.
pub fn occupancy_tables(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<OccupancyTables> {
    if pi.n_states != mdp.n_states || pi.n_actions != mdp.n_actions {
        return Err(Error::contract("policy table does not match the MDP"));
    }
    let n = mdp.n_states;
    let na = mdp.n_actions;
    // P_π(s -> s') = Σ_a π(a|s) T(s'|s,a)
    let mut p_pi = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..na {
            let w = pi.p(s, a);
            if w != 0.0 {
                for s2 in 0..n {
                    p_pi[s * n + s2] += w * mdp.t(s, a, s2);
                }
            }
        }
    }
    // (I - γ P_πᵀ) ρ = ρ0
    let mut system = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            system[i * n + j] = if i == j { 1.0 } else { 0.0 } - mdp.gamma * p_pi[j * n + i];
        }
    }
    let rho_s = solve_linear(system, mdp.rho0.clone(), n)?;

    let mut rho_sa = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            rho_sa[s * na + a] = rho_s[s] * pi.p(s, a);
        }
    }
    let mut rho_ss = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..na {
            let w = rho_sa[s * na + a];
            if w != 0.0 {
                for s2 in 0..n {
                    rho_ss[s * n + s2] += w * mdp.t(s, a, s2);
                }
            }
        }
    }
    let mut rho_a_given_ss = vec![0.0; n * n * na];
    for s in 0..n {
        for s2 in 0..n {
            let mut denom = 0.0;
            for a in 0..na {
                denom += mdp.t(s, a, s2) * pi.p(s, a);
            }
            if denom > 0.0 {
                for a in 0..na {
                    rho_a_given_ss[(s * n + s2) * na + a] = mdp.t(s, a, s2) * pi.p(s, a) / denom;
                }
            }
        }
    }
    Ok(OccupancyTables {
        rho_s,
        rho_sa,
        rho_ss,
        rho_a_given_ss,
        n_states: n,
        n_actions: na,
    })
}

/// Eq.-style environment inverse posterior `ρ_π(a|s,s')` for one pair.
pub fn env_inverse_posterior(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    s: usize,
    s2: usize,
) -> Result<Vec<f64>> {
    if s >= mdp.n_states || s2 >= mdp.n_states {
        return Err(Error::contract("state index out of range"));
    }
    let mut denom = 0.0;
    let mut post = vec![0.0; mdp.n_actions];
    for a in 0..mdp.n_actions {
        post[a] = mdp.t(s, a, s2) * behavior.p(s, a);
        denom += post[a];
    }
    if denom <= 0.0 {
        return Err(Error::InfeasibleTransition(format!(
            "pair ({s}, {s2}) has zero probability under the behavior policy"
        )));
    }
    post.iter_mut().for_each(|p| *p /= denom);
    Ok(post)
}

fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut kl = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi > 0.0 {
            if *qi <= 0.0 {
                return Err(Error::AbsoluteContinuity(format!(
                    "mass {pi} placed where the reference has none"
                )));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// The three KL terms of the inverse-dynamics-disagreement decomposition and
/// the identity residual `ILD − ILO − IDD`.
#[derive(Debug, Clone, PartialEq)]
pub struct IddReport {
    pub kl_ild: f64,
    pub kl_ilo: f64,
    pub kl_idd: f64,
    pub residual: f64,
}

/// Computes `KL(ρ_π(s,a)‖ρ_E(s,a))`, `KL(ρ_π(s,s')‖ρ_E(s,s'))` and the IDD
/// term (expected posterior KL under the agent's transition occupancy), all
/// over `(1-γ)`-normalized occupancies.
pub fn idd_check(
    mdp: &TabularMdp,
    pi_agent: &TabularPolicy,
    pi_expert: &TabularPolicy,
) -> Result<IddReport> {
    let occ_a = occupancy_tables(mdp, pi_agent)?;
    let occ_e = occupancy_tables(mdp, pi_expert)?;
    let z = 1.0 - mdp.gamma;

    let pa: Vec<f64> = occ_a.rho_sa.iter().map(|v| v * z).collect();
    let pe: Vec<f64> = occ_e.rho_sa.iter().map(|v| v * z).collect();
    let kl_ild = kl_discrete(&pa, &pe)?;

    let ta: Vec<f64> = occ_a.rho_ss.iter().map(|v| v * z).collect();
    let te: Vec<f64> = occ_e.rho_ss.iter().map(|v| v * z).collect();
    let kl_ilo = kl_discrete(&ta, &te)?;

    let n = mdp.n_states;
    let na = mdp.n_actions;
    let mut kl_idd = 0.0;
    for s in 0..n {
        for s2 in 0..n {
            let w = ta[s * n + s2];
            if w > 0.0 {
                for a in 0..na {
                    let p = occ_a.posterior(s, s2, a);
                    if p > 0.0 {
                        let q = occ_e.posterior(s, s2, a);
                        if q <= 0.0 {
                            return Err(Error::AbsoluteContinuity(
                                "agent posterior mass where expert posterior has none".into(),
                            ));
                        }
                        kl_idd += w * p * (p / q).ln();
                    }
                }
            }
        }
    }
    let residual = kl_ild - kl_ilo - kl_idd;
    Ok(IddReport {
        kl_ild,
        kl_ilo,
        kl_idd,
        residual,
    })
}

/// Terms of the regularizer upper-bound decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// `E_joint[log(ρ(a|s,s') / ρ_{π_θ}(a|s,s'))]`.
    pub lhs: f64,
    /// `E_joint[log(ρ(a|s,s') / π_θ(a|s))]` — the tractable KL term.
    pub kl_term: f64,
    /// `E_joint[log(Σ_ā T(s'|s,ā)π_θ(ā|s) / T(s'|s,a))]`.
    pub integral_term: f64,
    /// `lhs − kl_term − integral_term`; zero by the exact decomposition.
    pub residual: f64,
}

/// Joint distribution over `(s, a, s')` triples, indexed `[s][a][s']`.
pub type JointDistribution = Vec<f64>;

/// Default joint for [`bound_check`]: normalized behavior state occupancy,
/// behavior action choice, environment transition. Identical to drawing the
/// action from the behavior inverse posterior given `(s, s')`.
pub fn behavior_joint(mdp: &TabularMdp, behavior: &TabularPolicy) -> Result<JointDistribution> {
    let occ = occupancy_tables(mdp, behavior)?;
    let z = 1.0 - mdp.gamma;
    let n = mdp.n_states;
    let na = mdp.n_actions;
    let mut joint = vec![0.0; n * na * n];
    for s in 0..n {
        for a in 0..na {
            let w = z * occ.rho_sa[s * na + a];
            if w != 0.0 {
                for s2 in 0..n {
                    joint[(s * na + a) * n + s2] = w * mdp.t(s, a, s2);
                }
            }
        }
    }
    Ok(joint)
}

/// Verifies the decomposition
/// `E[log(ρ(a|s,s')/ρ_{π_θ}(a|s,s'))] = E[log(ρ(a|s,s')/π_θ(a|s))] + E[log(Σ_ā T π_θ / T)]`
/// under the supplied joint (defaults to [`behavior_joint`]). The inverse
/// posterior `ρ(a|s,s')` is taken under `behavior`, `ρ_{π_θ}` under `pi_theta`.
pub fn bound_check(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    pi_theta: &TabularPolicy,
    joint: Option<&JointDistribution>,
) -> Result<BoundReport> {
    let default_joint;
    let joint = match joint {
        Some(j) => j,
        None => {
            default_joint = behavior_joint(mdp, behavior)?;
            &default_joint
        }
    };
    let n = mdp.n_states;
    let na = mdp.n_actions;
    if joint.len() != n * na * n {
        return Err(Error::contract("joint distribution shape mismatch"));
    }

    let mut lhs = 0.0;
    let mut kl_term = 0.0;
    let mut integral_term = 0.0;
    for s in 0..n {
        // denominators per (s, s') pair
        for s2 in 0..n {
            let mut denom_b = 0.0;
            let mut denom_t = 0.0;
            for a in 0..na {
                denom_b += mdp.t(s, a, s2) * behavior.p(s, a);
                denom_t += mdp.t(s, a, s2) * pi_theta.p(s, a);
            }
            for a in 0..na {
                let w = joint[(s * na + a) * n + s2];
                if w <= 0.0 {
                    continue;
                }
                let t = mdp.t(s, a, s2);
                let rho_b = t * behavior.p(s, a) / denom_b;
                let rho_t = t * pi_theta.p(s, a) / denom_t;
                if rho_b <= 0.0 || rho_t <= 0.0 || pi_theta.p(s, a) <= 0.0 || t <= 0.0 {
                    return Err(Error::AbsoluteContinuity(format!(
                        "joint mass on ({s},{a},{s2}) where a ratio vanishes"
                    )));
                }
                lhs += w * (rho_b / rho_t).ln();
                kl_term += w * (rho_b / pi_theta.p(s, a)).ln();
                integral_term += w * (denom_t / t).ln();
            }
        }
    }
    let residual = lhs - kl_term - integral_term;
    Ok(BoundReport {
        lhs,
        kl_term,
        integral_term,
        residual,
    })
}

/// Random MDP with Dirichlet(1) transition rows and initial distribution.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, rng: &mut impl Rng) -> TabularMdp {
    let dirichlet = |rng: &mut dyn FnMut() -> f64, n: usize| -> Vec<f64> {
        // normalized Exp(1) draws
        let mut v: Vec<f64> = (0..n).map(|_| -(1.0f64 - rng()).ln()).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    };
    let mut draw = || rng.gen::<f64>();
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(dirichlet(&mut draw, n_states));
    }
    let rho0 = dirichlet(&mut draw, n_states);
    TabularMdp::new(n_states, n_actions, transition, rho0, gamma).expect("random rows normalized")
}

/// Random policy with Dirichlet(1) rows, floored at `floor` and renormalized
/// so absolute continuity holds in the KL terms.
pub fn random_policy(
    n_states: usize,
    n_actions: usize,
    floor: f64,
    rng: &mut impl Rng,
) -> TabularPolicy {
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        let mut row: Vec<f64> = (0..n_actions)
            .map(|_| -(1.0f64 - rng.gen::<f64>()).ln())
            .collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x = (*x / s).max(floor));
        let s2: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s2);
        probs.extend(row);
    }
    TabularPolicy::new(n_states, n_actions, probs).expect("floored rows normalized")
}

/// One randomized-instance result in the verification battery.
#[derive(Debug, Clone)]
pub struct BatteryRow {
    pub instance: usize,
    pub idd_residual: f64,
    pub bound_residual: f64,
    /// Slack of `lhs ≤ kl_term + integral_term` (non-negative when the
    /// inequality holds).
    pub bound_slack: f64,
    pub occupancy_mass_error: f64,
}

/// Battery outcome over randomized tabular instances.
#[derive(Debug, Clone)]
pub struct BatteryReport {
    pub rows: Vec<BatteryRow>,
    pub max_idd_residual: f64,
    pub max_bound_residual: f64,
    pub min_bound_slack: f64,
    /// Largest integral term observed over the sampled policies; an
    /// empirical stand-in for the bound's sup term, reported not asserted.
    pub sup_integral_term: f64,
    pub pass: bool,
}

/// Runs `instances` randomized identity checks (4 states, 3 actions, γ=0.9).
pub fn run_battery(instances: usize, seed: u64, tolerance: f64) -> Result<BatteryReport> {
    let rows: Vec<Result<BatteryRow>> = par::map_indexed(instances, |i| {
        let mut rng = stream(seed, 0xBA77E0 + i as u64);
        let mdp = random_mdp(4, 3, 0.9, &mut rng);
        let agent = random_policy(4, 3, 1e-3, &mut rng);
        let expert = random_policy(4, 3, 1e-3, &mut rng);
        let idd = idd_check(&mdp, &agent, &expert)?;
        let bound = bound_check(&mdp, &expert, &agent, None)?;
        let occ = occupancy_tables(&mdp, &agent)?;
        let mass = (1.0 - mdp.gamma) * occ.rho_s.iter().sum::<f64>();
        Ok(BatteryRow {
            instance: i,
            idd_residual: idd.residual,
            bound_residual: bound.residual,
            bound_slack: bound.kl_term + bound.integral_term - bound.lhs,
            occupancy_mass_error: (mass - 1.0).abs(),
        })
    });
    let rows: Vec<BatteryRow> = rows.into_iter().collect::<Result<_>>()?;
    let max_idd = rows
        .iter()
        .map(|r| r.idd_residual.abs())
        .fold(0.0, f64::max);
    let max_bound = rows
        .iter()
        .map(|r| r.bound_residual.abs())
        .fold(0.0, f64::max);
    let min_slack = rows
        .iter()
        .map(|r| r.bound_slack)
        .fold(f64::INFINITY, f64::min);
    let sup_integral = {
        let mut sup = f64::NEG_INFINITY;
        for (i, _) in rows.iter().enumerate() {
            let mut rng = stream(seed, 0xBA77E0 + i as u64);
            let mdp = random_mdp(4, 3, 0.9, &mut rng);
            let agent = random_policy(4, 3, 1e-3, &mut rng);
            let expert = random_policy(4, 3, 1e-3, &mut rng);
            let b = bound_check(&mdp, &expert, &agent, None)?;
            sup = sup.max(b.integral_term);
        }
        sup
    };
    let pass = max_idd <= tolerance && max_bound <= tolerance && min_slack >= -tolerance;
    Ok(BatteryReport {
        rows,
        max_idd_residual: max_idd,
        max_bound_residual: max_bound,
        min_bound_slack: min_slack,
        sup_integral_term: sup_integral,
        pass,
    })
}
