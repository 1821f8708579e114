//! Property suites run against a dataset, each reporting per-check results.

use clap::ValueEnum;
use mpkm_core::facility::{lmp_dual_oracle, verify_lmp};
use mpkm_core::graph::coverage_miss_rate;
use mpkm_core::oracles::{exact_alpha_star, exact_radii, paid_facilities, payment};
use mpkm_core::{build_spanner, solve_fl, FlConfig, FlInstance, FlSolution, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const REL_TOL: f64 = 1e-9;
const MISS_RATE_LIMIT: f64 = 0.01;
const SAMPLED_PAIRS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Radius and initial-dual sandwiches against the exact oracles
    Sandwich,
    /// Dual-value bounds, the selected-set sandwich and no overpayment
    Bounds,
    /// Dual certificate feasibility and payments
    Certificate,
    /// Spanner edge count, stretch and 2-hop coverage
    Spanner,
    /// Per-machine capacity against the ledger
    Accounting,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Sandwich, Suite::Bounds, Suite::Certificate, Suite::Spanner, Suite::Accounting];
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub violations: usize,
    pub detail: String,
}

impl Check {
    fn count(name: &str, violations: usize, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: violations == 0, violations, detail: detail.into() }
    }
}

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub mode: Mode,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn le(a: f64, b: f64) -> bool {
    a <= b + REL_TOL * a.abs().max(b.abs())
}

/// Lazily solved instances: exact mode for the oracle suites, the configured mode otherwise.
pub struct Verifier<'a> {
    inst: &'a FlInstance,
    config: FlConfig,
    exact: Option<FlSolution>,
    configured: Option<FlSolution>,
}

impl<'a> Verifier<'a> {
    pub fn new(inst: &'a FlInstance, config: FlConfig) -> Self {
        Self { inst, config, exact: None, configured: None }
    }

    fn exact(&mut self) -> mpkm_core::Result<&FlSolution> {
        if self.exact.is_none() {
            let mut cfg = self.config.clone();
            cfg.mode = Mode::Exact;
            self.exact = Some(solve_fl(self.inst, &cfg)?);
        }
        Ok(self.exact.as_ref().expect("just solved"))
    }

    fn configured(&mut self) -> mpkm_core::Result<&FlSolution> {
        if self.config.mode == Mode::Exact {
            return self.exact();
        }
        if self.configured.is_none() {
            self.configured = Some(solve_fl(self.inst, &self.config)?);
        }
        Ok(self.configured.as_ref().expect("just solved"))
    }

    pub fn run(&mut self, suite: Suite) -> mpkm_core::Result<SuiteReport> {
        let (mode, checks) = match suite {
            Suite::Sandwich => (Mode::Exact, self.sandwich()?),
            Suite::Bounds => (Mode::Exact, self.bounds()?),
            Suite::Certificate => (self.config.mode, self.certificate()?),
            Suite::Spanner => (Mode::Lsh, self.spanner()?),
            Suite::Accounting => (self.config.mode, self.accounting()?),
        };
        Ok(SuiteReport { suite, mode, passed: checks.iter().all(|c| c.passed), checks })
    }

    fn sandwich(&mut self) -> mpkm_core::Result<Vec<Check>> {
        let inst = self.inst;
        let sol = self.exact()?;
        let ct = &sol.constants;
        let radii = exact_radii(inst);
        let radius_bad = radii
            .iter()
            .enumerate()
            .filter(|&(f, &r)| !(le(r / ct.c_r, sol.duals.radii_hat[f]) && le(sol.duals.radii_hat[f], r)))
            .count();
        let dual_bad = (0..inst.num_clients())
            .filter(|&c| {
                let star = exact_alpha_star(inst, &radii, c);
                let a0 = sol.duals.alpha0[c];
                !(le(star / ct.c_d_plus, a0) && le(a0, star / ct.c_d_minus))
            })
            .count();
        Ok(vec![
            Check::count("radius_sandwich", radius_bad, format!("{} facilities, factor C_R = {}", radii.len(), ct.c_r)),
            Check::count("dual_sandwich", dual_bad, format!("{} clients", inst.num_clients())),
        ])
    }

    fn bounds(&mut self) -> mpkm_core::Result<Vec<Check>> {
        let inst = self.inst;
        let sol = self.exact()?;
        let ct = &sol.constants;
        let radii = exact_radii(inst);
        let (a0, a1) = (&sol.duals.alpha0, &sol.duals.alpha1);
        let paid = paid_facilities(inst, a1, 1.0);
        let approx = paid_facilities(inst, a1, ct.kappa);
        let (mut existence, mut dual_bound, mut same_radius) = (0, 0, 0);
        for c in 0..inst.num_clients() {
            if !paid.iter().any(|&f| le(radii[f].powi(2).max(inst.cost(c, f)), ct.eta * a0[c])) {
                existence += 1;
            }
            let contributes: Vec<usize> = (0..inst.num_facilities()).filter(|&f| ct.kappa * a1[c] > inst.cost(c, f)).collect();
            for (i, &f) in contributes.iter().enumerate() {
                dual_bound += usize::from(!le(a1[c], ct.rho * radii[f].powi(2)));
                for &g in &contributes[i + 1..] {
                    let (lo, hi) = (radii[f].min(radii[g]), radii[f].max(radii[g]));
                    let dist = inst.sites().dist(inst.facility_site(f), inst.facility_site(g));
                    same_radius += usize::from(!le(hi, ct.zeta * lo) || dist >= ct.zeta / 2.0 * lo);
                }
            }
        }
        let missing = paid.iter().filter(|f| !sol.paid.contains(f)).count();
        let extra = sol.paid.iter().filter(|f| !approx.contains(f)).count();
        let overpaid = (0..inst.num_facilities()).filter(|&f| payment(inst, a0, f) >= inst.lambda()).count();
        let regime = if ct.theory_valid { "Γ ≥ 5" } else { "Γ < 5, bounds not guaranteed" };
        Ok(vec![
            Check::count("paid_facility_nearby", existence, regime),
            Check::count("dual_bounded_by_radius", dual_bound, regime),
            Check::count("shared_client_radii", same_radius, regime),
            Check::count("selected_set_sandwich", missing + extra, format!("{missing} paid not selected, {extra} selected not κ-paid")),
            Check::count("no_overpayment_at_alpha0", overpaid, ""),
        ])
    }

    fn certificate(&mut self) -> mpkm_core::Result<Vec<Check>> {
        let inst = self.inst;
        let sol = self.configured()?;
        let cert = lmp_dual_oracle(inst, sol)?;
        let r = verify_lmp(inst, sol, &cert);
        let flag = |name: &str, ok: bool, detail: String| Check::count(name, usize::from(!ok), detail);
        Ok(vec![
            flag("nonnegative", r.alpha_nonnegative && r.beta_nonnegative, String::new()),
            flag("hinge_consistent", r.hinge_consistent, String::new()),
            flag("payments_within_lambda", r.payments_within_lambda, format!("max ratio {}", r.max_payment_ratio)),
            flag("opened_exactly_paid", r.opened_exactly_paid, String::new()),
            flag("dual_bounds", r.dual_bounds, String::new()),
            flag("single_contribution", r.single_contribution, format!("max {}", r.max_contributions_to_opened)),
            flag("denominator", r.denominator_ok, format!("Λ_emp {}", r.lambda_emp)),
        ])
    }

    fn spanner(&mut self) -> mpkm_core::Result<Vec<Check>> {
        let points = self.inst.sites();
        let n = points.len();
        let g = build_spanner(points, self.config.epsilon, &self.config.lsh_params(points.dim()))?;
        let limit = (n as f64).powf(1.0 + self.config.epsilon);
        let stretched = g.weighted_edges().iter().filter(|&&(u, v, w)| !le(points.dist(u, v), g.gamma_eff() * w)).count();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let pairs: Vec<(usize, usize)> = if n < 2 {
            Vec::new()
        } else {
            (0..SAMPLED_PAIRS)
                .map(|_| loop {
                    let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
                    if x != y {
                        break (x, y);
                    }
                })
                .collect()
        };
        let miss = if pairs.is_empty() { 0.0 } else { coverage_miss_rate(&g, points, &pairs) };
        Ok(vec![
            Check::count("edge_budget", usize::from(g.edge_count() as f64 > limit), format!("{} edges, limit {limit:.0}", g.edge_count())),
            Check::count("edge_stretch", stretched, format!("gamma_eff {}", g.gamma_eff())),
            Check::count("two_hop_coverage", usize::from(miss > MISS_RATE_LIMIT), format!("miss rate {miss} on {} pairs", pairs.len())),
        ])
    }

    fn accounting(&mut self) -> mpkm_core::Result<Vec<Check>> {
        let cap = self.config.cluster_config(self.inst.sites().len())?.machine_capacity();
        let sol = self.configured()?;
        let peak = sol.ledger.peak_machine_words;
        Ok(vec![Check::count(
            "machine_capacity",
            usize::from(peak > cap),
            format!("peak {peak} words, capacity {cap}, {} rounds", sol.ledger.total_rounds()),
        )])
    }
}
