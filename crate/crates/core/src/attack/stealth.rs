//! Injection variables and detector-evasion rows shared by the fast
//! candidate search and the full trajectory model.

use crate::optimizer::{encode_indicator_tight, BigMConfig, LinExpr, MilpModel, Sense, VarId};

use super::{AttackError, AttackProblem, Detector};

/// Injection variables for cycles `start..end` on accessible buses.
#[derive(Debug, Clone)]
pub struct InjectionVars {
    pub start: usize,
    pub end: usize,
    /// `vars[cycle - start][bus]`
    pub vars: Vec<Vec<Option<VarId>>>,
}

impl InjectionVars {
    /// With `implied`, bounds are also tightened to what the detector rows
    /// of every cycle in `start..end` already force; only valid when all
    /// those rows are unconditional.
    pub fn add(
        model: &mut MilpModel,
        problem: &AttackProblem,
        benign: &[Vec<f64>],
        start: usize,
        end: usize,
        implied: bool,
    ) -> Self {
        let bound = problem.options.injection_bound;
        let vars = (start..end)
            .map(|k| {
                problem
                    .adversary
                    .accessibility
                    .iter()
                    .enumerate()
                    .map(|(j, &acc)| {
                        acc.then(|| {
                            // Perceived loads stay non-negative.
                            let mut lo = (-bound).max(-benign[k][j]);
                            let mut hi = bound;
                            if implied {
                                if let Some((a, b)) = implied_range(problem, benign, j, k, start) {
                                    lo = lo.max(a - benign[k][j]);
                                    hi = hi.min(b - benign[k][j]).max(lo);
                                }
                            }
                            model.add_continuous(format!("inj_b{}_c{}", j + 1, k), lo, hi)
                        })
                    })
                    .collect()
            })
            .collect();
        Self { start, end, vars }
    }

    pub fn get(&self, bus: usize, cycle: usize) -> Option<VarId> {
        if cycle < self.start || cycle >= self.end {
            return None;
        }
        self.vars[cycle - self.start][bus]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, VarId)> + '_ {
        self.vars.iter().enumerate().flat_map(move |(dk, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(j, v)| v.map(|v| (j, self.start + dk, v)))
        })
    }

    /// Perceived load of `bus` in `cycle`: benign value plus injection.
    pub fn perceived(&self, benign: &[Vec<f64>], bus: usize, cycle: usize) -> LinExpr {
        let mut e = LinExpr::constant(benign[cycle][bus]);
        if let Some(v) = self.get(bus, cycle) {
            e.add_term(v, 1.0);
        }
        e
    }

    /// Offsets `[cycle][bus]` from a solution vector, cycles `0..end`.
    pub fn offsets(&self, values: &[f64], n_buses: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n_buses]; self.end];
        for (j, k, v) in self.iter() {
            out[k][j] = values[v.0];
        }
        out
    }
}

/// Range the detector allows for the perceived load of `bus` in `cycle`
/// when every cycle from `start` on is checked.
fn implied_range(problem: &AttackProblem, benign: &[Vec<f64>], bus: usize, cycle: usize, start: usize) -> Option<(f64, f64)> {
    let slack = 1e-6;
    match &problem.detector {
        Detector::None => None,
        Detector::Bdd(rule) => {
            // Untouched before `start`, then at most one step per cycle.
            let anchor = benign[start.checked_sub(1)?][bus];
            let reach = rule.max_deviation * (cycle + 1 - start) as f64 + slack;
            Some((anchor - reach, anchor + reach))
        }
        Detector::Adm(adm) => {
            if cycle < adm.lookback() {
                return None;
            }
            let hulls = adm.hulls(crate::grid_model::BusId::from_index(bus));
            let coords = hulls.iter().flat_map(|h| h.vertices.iter().flatten().copied());
            let (lo, hi) = coords.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let pad = slack + adm.config.tau;
            lo.is_finite().then_some((lo - pad, hi + pad))
        }
    }
}

/// Adds the detector rows for the perception of cycle `k`. When `gate` is
/// given the rows only bind while that binary is 1.
pub fn add_stealth_rows(
    model: &mut MilpModel,
    problem: &AttackProblem,
    vars: &InjectionVars,
    benign: &[Vec<f64>],
    k: usize,
    gate: Option<VarId>,
) -> Result<(), AttackError> {
    let margin = problem.options.stealth_margin;
    let cfg = BigMConfig::default();
    match &problem.detector {
        Detector::None => {}
        Detector::Bdd(rule) => {
            if k == 0 {
                return Ok(());
            }
            for j in 0..problem.network.n_buses() {
                if vars.get(j, k).is_none() && vars.get(j, k - 1).is_none() {
                    continue;
                }
                let mut diff = vars.perceived(benign, j, k);
                diff.add_scaled(&vars.perceived(benign, j, k - 1), -1.0);
                let limit = rule.max_deviation - margin;
                let mut neg = LinExpr::new();
                neg.add_scaled(&diff, -1.0);
                for (side, expr) in [("up", diff), ("down", neg)] {
                    let name = format!("bdd_{side}_b{}_c{}", j + 1, k);
                    match gate {
                        None => {
                            model.add_constraint(name, expr, Sense::Le, limit);
                        }
                        Some(z) => {
                            encode_indicator_tight(model, name, z, true, expr, limit, &cfg)?;
                        }
                    }
                }
            }
        }
        Detector::Adm(adm) => {
            let l = adm.lookback();
            if k < l {
                return Ok(());
            }
            for j in 0..problem.network.n_buses() {
                if (k - l..=k).all(|c| vars.get(j, c).is_none()) {
                    continue;
                }
                let bus = crate::grid_model::BusId::from_index(j);
                let hulls = adm.hulls(bus);
                if hulls.is_empty() {
                    continue;
                }
                let window: Vec<LinExpr> = (k - l..=k).map(|c| vars.perceived(benign, j, c)).collect();
                let rows_of = |h: &crate::adm::ClusterHull| -> Vec<(LinExpr, f64)> {
                    h.hyperplanes
                        .iter()
                        .map(|a| {
                            let mut e = LinExpr::new();
                            for (coef, w) in a[..=l].iter().zip(&window) {
                                e.add_scaled(w, *coef);
                            }
                            (e, -a[l + 1] - margin)
                        })
                        .collect()
                };
                if hulls.len() == 1 && gate.is_none() {
                    for (r, (e, rhs)) in rows_of(&hulls[0]).into_iter().enumerate() {
                        model.add_constraint(format!("adm_b{}_c{}_h0_r{}", j + 1, k, r), e, Sense::Le, rhs);
                    }
                    continue;
                }
                // The hull of all clusters contains every admissible window;
                // as plain rows it tightens the relaxation the search prunes on.
                let all: Vec<Vec<f64>> = hulls.iter().flat_map(|h| h.vertices.iter().cloned()).collect();
                let union = crate::adm::hull_from_points(&all, adm.config.tau)
                    .map_err(|e| AttackError::Input(format!("cluster union hull: {e}")))?;
                for (r, (e, rhs)) in rows_of(&union).into_iter().enumerate() {
                    let name = format!("adm_b{}_c{}_u_r{}", j + 1, k, r);
                    match gate {
                        None => {
                            model.add_constraint(name, e, Sense::Le, rhs);
                        }
                        Some(z) => {
                            encode_indicator_tight(model, name, z, true, e, rhs, &cfg)?;
                        }
                    }
                }
                let selectors: Vec<VarId> = (0..hulls.len())
                    .map(|c| model.add_binary(format!("sel_b{}_c{}_h{}", j + 1, k, c)))
                    .collect();
                let mut pick = LinExpr::new();
                for &s in &selectors {
                    pick.add_term(s, 1.0);
                }
                match gate {
                    None => {
                        model.add_constraint(format!("onehot_b{}_c{}", j + 1, k), pick, Sense::Eq, 1.0);
                    }
                    Some(z) => {
                        pick.add_term(z, -1.0);
                        model.add_constraint(format!("onehot_b{}_c{}", j + 1, k), pick, Sense::Eq, 0.0);
                    }
                }
                for (c, h) in hulls.iter().enumerate() {
                    for (r, (e, rhs)) in rows_of(h).into_iter().enumerate() {
                        encode_indicator_tight(
                            model,
                            format!("adm_b{}_c{}_h{}_r{}", j + 1, k, c, r),
                            selectors[c],
                            true,
                            e,
                            rhs,
                            &cfg,
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}
