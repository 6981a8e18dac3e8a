//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;

use nalgebra::{DMatrix, DVector};

use gridfdi_core::dynamics::GridState;
use gridfdi_core::grid_model::{laplacian, NetworkModel};
use gridfdi_core::optimizer::{LinExpr, MilpModel, Sense, VarId};

pub type Q = BigRational;

pub fn q(v: i64) -> Q {
    BigRational::from_integer(BigInt::from(v))
}

/// Solves the square system `a x = b` exactly; `None` when singular.
pub fn solve_exact(mut a: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| a[r][col] != q(0))?;
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && a[r][col] != q(0) {
                let f = &a[r][col] / &a[col][col];
                for c in col..n {
                    let t = &f * &a[col][c];
                    a[r][c] -= t;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Exact minimum of `c·x` over `{x : a x <= b}` by vertex enumeration.
/// The region must be bounded; `None` means infeasible.
pub fn vertex_lp_exact(c: &[i64], a: &[Vec<i64>], b: &[i64]) -> Option<Q> {
    let n = c.len();
    let mut best: Option<Q> = None;
    combinations(a.len(), n, &mut |idx| {
        let sys: Vec<Vec<Q>> = idx.iter().map(|&i| a[i].iter().map(|&v| q(v)).collect()).collect();
        let rhs: Vec<Q> = idx.iter().map(|&i| q(b[i])).collect();
        if let Some(x) = solve_exact(sys, rhs) {
            let feasible = a.iter().zip(b).all(|(row, &bi)| {
                let lhs: Q = row.iter().zip(&x).map(|(&r, xi)| q(r) * xi).sum();
                lhs <= q(bi)
            });
            if feasible {
                let obj: Q = c.iter().zip(&x).map(|(&ci, xi)| q(ci) * xi).sum();
                if best.as_ref().is_none_or(|b| obj < *b) {
                    best = Some(obj);
                }
            }
        }
    });
    best
}

pub fn to_f64(v: &Q) -> f64 {
    num_traits::ToPrimitive::to_f64(v).expect("finite rational")
}

/// Integer-data MILP: binaries `y`, continuous `x` in a box, rows
/// `ay·y + ax·x <= r`, objective `cy·y + cx·x`.
#[derive(Debug, Clone)]
pub struct IntMilp {
    pub cy: Vec<i64>,
    pub cx: Vec<i64>,
    pub rows: Vec<(Vec<i64>, Vec<i64>, i64)>,
    pub x_box: i64,
}

impl IntMilp {
    pub fn to_model(&self) -> (MilpModel, Vec<VarId>, Vec<VarId>) {
        let mut m = MilpModel::new();
        let ys: Vec<VarId> = (0..self.cy.len()).map(|i| m.add_binary(format!("y{i}"))).collect();
        let xs: Vec<VarId> = (0..self.cx.len())
            .map(|i| m.add_continuous(format!("x{i}"), -self.x_box as f64, self.x_box as f64))
            .collect();
        for (k, (ay, ax, r)) in self.rows.iter().enumerate() {
            let mut e = LinExpr::new();
            for (&v, &c) in ys.iter().zip(ay) {
                e.add_term(v, c as f64);
            }
            for (&v, &c) in xs.iter().zip(ax) {
                e.add_term(v, c as f64);
            }
            m.add_constraint(format!("r{k}"), e, Sense::Le, *r as f64);
        }
        let mut obj = LinExpr::new();
        for (&v, &c) in ys.iter().zip(&self.cy) {
            obj.add_term(v, c as f64);
        }
        for (&v, &c) in xs.iter().zip(&self.cx) {
            obj.add_term(v, c as f64);
        }
        m.set_objective(obj);
        (m, ys, xs)
    }

    /// Brute force over all binary assignments, exact LP for the rest.
    pub fn brute_force(&self) -> Option<Q> {
        let nb = self.cy.len();
        let nx = self.cx.len();
        let mut best: Option<Q> = None;
        for mask in 0u32..(1 << nb) {
            let y: Vec<i64> = (0..nb).map(|i| ((mask >> i) & 1) as i64).collect();
            let fixed: i64 = self.cy.iter().zip(&y).map(|(c, v)| c * v).sum();
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (ay, ax, r) in &self.rows {
                a.push(ax.clone());
                b.push(r - ay.iter().zip(&y).map(|(c, v)| c * v).sum::<i64>());
            }
            let val = if nx == 0 {
                if b.iter().all(|&bi| bi >= 0) {
                    Some(q(0))
                } else {
                    None
                }
            } else {
                for j in 0..nx {
                    let mut up = vec![0; nx];
                    up[j] = 1;
                    let mut lo = vec![0; nx];
                    lo[j] = -1;
                    a.push(up);
                    b.push(self.x_box);
                    a.push(lo);
                    b.push(self.x_box);
                }
                vertex_lp_exact(&self.cx, &a, &b)
            };
            if let Some(v) = val {
                let total = v + q(fixed);
                if best.as_ref().is_none_or(|b| total < *b) {
                    best = Some(total);
                }
            }
        }
        best
    }
}

/// Deterministic xorshift so corpus generation does not depend on the
/// crate's own RNG plumbing.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.next() % ((hi - lo + 1) as u64)) as i64
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

pub fn random_int_milp(seed: u64, n_bin: usize, n_cont: usize, n_rows: usize) -> IntMilp {
    let mut rng = XorShift(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1);
    let cy = (0..n_bin).map(|_| rng.range(-5, 5)).collect();
    let cx = (0..n_cont).map(|_| rng.range(-3, 3)).collect();
    let rows = (0..n_rows)
        .map(|_| {
            let ay: Vec<i64> = (0..n_bin).map(|_| rng.range(-3, 4)).collect();
            let ax: Vec<i64> = (0..n_cont).map(|_| rng.range(-2, 2)).collect();
            let r = rng.range(-1, 6);
            (ay, ax, r)
        })
        .collect();
    IntMilp {
        cy,
        cx,
        rows,
        x_box: 4,
    }
}

/// Exact `min c·x` over `{x in [-1, 1]^n : a x <= b}` for few coupling rows.
/// At a vertex, each coordinate not solved from active coupling rows sits
/// at a box bound, which keeps the enumeration small for n = 10.
pub fn box_vertex_lp_exact(c: &[i64], a: &[Vec<i64>], b: &[i64]) -> Option<Q> {
    let n = c.len();
    let mut best: Option<Q> = None;
    for k in 0..=a.len().min(n) {
        combinations(a.len(), k, &mut |rows| {
            combinations(n, k, &mut |free| {
                let fixed: Vec<usize> = (0..n).filter(|j| !free.contains(j)).collect();
                for mask in 0u32..(1 << fixed.len()) {
                    let mut x: Vec<Q> = vec![q(0); n];
                    for (bit, &j) in fixed.iter().enumerate() {
                        x[j] = if (mask >> bit) & 1 == 1 { q(1) } else { q(-1) };
                    }
                    let sys: Vec<Vec<Q>> = rows.iter().map(|&r| free.iter().map(|&j| q(a[r][j])).collect()).collect();
                    let rhs: Vec<Q> = rows
                        .iter()
                        .map(|&r| q(b[r]) - fixed.iter().map(|&j| q(a[r][j]) * &x[j]).sum::<Q>())
                        .collect();
                    let Some(sol) = solve_exact(sys, rhs) else { continue };
                    for (&j, v) in free.iter().zip(sol) {
                        x[j] = v;
                    }
                    let in_box = x.iter().all(|v| *v <= q(1) && *v >= q(-1));
                    let rows_ok = a.iter().zip(b).all(|(row, &bi)| {
                        row.iter().zip(&x).map(|(&r, xi)| q(r) * xi).sum::<Q>() <= q(bi)
                    });
                    if in_box && rows_ok {
                        let obj: Q = c.iter().zip(&x).map(|(&ci, xi)| q(ci) * xi).sum();
                        if best.as_ref().is_none_or(|b| obj < *b) {
                            best = Some(obj);
                        }
                    }
                }
            });
        });
    }
    best
}

/// `v * 2^60` as an exact integer (asserts that no bits are lost).
pub fn fixed(v: f64) -> i128 {
    let s = v * (1u64 << 60) as f64;
    assert_eq!(s.fract(), 0.0, "{v} is not representable on the 2^-60 grid");
    s as i128
}

pub fn orient(a: [i128; 2], b: [i128; 2], c: [i128; 2]) -> i128 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Exact test of `p` being a convex combination of `verts`: by
/// Caratheodory it is iff `p` lies in a triangle of three of them.
pub fn in_convex_combination_2d(verts: &[[i128; 2]], p: [i128; 2]) -> bool {
    let n = verts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (verts[i], verts[j], verts[k]);
                if orient(a, b, c) == 0 {
                    continue;
                }
                let o = [orient(a, b, p), orient(b, c, p), orient(c, a, p)];
                if o.iter().all(|&x| x >= 0) || o.iter().all(|&x| x <= 0) {
                    return true;
                }
            }
        }
    }
    false
}

/// Forward-Euler integration of the swing, governor and DC-flow equations
/// with setpoints held at `reference`. Returns omega after every `stride`
/// substeps.
pub fn explicit_reference(
    net: &NetworkModel,
    s0: &GridState,
    reference: &[f64],
    loads: &[f64],
    h: f64,
    steps: usize,
    stride: usize,
) -> Vec<Vec<f64>> {
    let n = net.n_buses();
    let gens = net.generators();
    let slack_gen = net.slack_generator();
    let l = laplacian(net);
    let gen_bus: Vec<usize> = gens.iter().map(|g| g.bus.index()).collect();
    let free: Vec<usize> = (0..n).filter(|i| !gen_bus.contains(i)).collect();
    let lff = DMatrix::from_fn(free.len(), free.len(), |r, c| l[(free[r], free[c])]);
    let lff = lff.lu();
    let mut theta = s0.angle.clone();
    let mut omega = s0.omega.clone();
    let mut pm = s0.mech_power.clone();
    let mut out = Vec::new();
    for k in 1..=steps {
        // Algebraic part: angles at load-only buses, then generator output.
        let rhs = DVector::from_fn(free.len(), |r, _| {
            let i = free[r];
            -loads[i] - gen_bus.iter().map(|&b| l[(i, b)] * theta[b]).sum::<f64>()
        });
        let x = lff.solve(&rhs).unwrap();
        for (r, &i) in free.iter().enumerate() {
            theta[i] = x[r];
        }
        let pg: Vec<f64> = gen_bus
            .iter()
            .map(|&b| loads[b] + (0..n).map(|j| l[(b, j)] * theta[j]).sum::<f64>())
            .collect();
        let w_slack = omega[slack_gen];
        let mut next_theta = theta.clone();
        let mut next_omega = omega.clone();
        let mut next_pm = pm.clone();
        for (g, gen) in gens.iter().enumerate() {
            let p = gen.params;
            let dw = omega[g] - net.nominal_omega;
            if g != slack_gen {
                next_theta[gen_bus[g]] += h * (omega[g] - w_slack);
            }
            next_omega[g] += h / (2.0 * p.inertia) * (pm[g] - pg[g] - p.damping * dw);
            if p.has_governor {
                next_pm[g] += h / p.governor_time_constant * ((reference[g] - dw) / p.droop - pm[g]);
            }
        }
        theta = next_theta;
        omega = next_omega;
        pm = next_pm;
        if k % stride == 0 {
            out.push(omega.clone());
        }
    }
    out
}
