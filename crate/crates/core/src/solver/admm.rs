//! ADMM iterations on the equilibrated problem, plus solution polishing and
//! infeasibility detection.

use super::ldl::{LdlFactor, SymbolicLdl};
use super::sparse::{inf_norm, CscMatrix};
use super::{QpError, QpSolution, QpStatus, QuadraticProgram, SolverSettings};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_REFACTOR_RATIO: f64 = 5.0;
const SCALING_MIN: f64 = 1e-4;
const SCALING_MAX: f64 = 1e4;
const POLISH_DELTA: f64 = 1e-6;
const POLISH_REFINE_STEPS: usize = 3;
const POLISH_WINDOW: f64 = 10.0;
const POLISH_ROUNDS: usize = 100;
const POLISH_ATTEMPTS: usize = 3;
/// Multipliers this far on the wrong side, relative to the largest one, count
/// as zero.
const POLISH_SIGN_TOL: f64 = 1e-5;
/// A failed polish is retried only once the residuals shrink by this factor.
const POLISH_GATE_DECAY: f64 = 0.1;
/// Tolerance factor used when polishing was requested but did not succeed.
const UNPOLISHED_TIGHTEN: f64 = 1e-3;

/// Equilibrated copy of the problem: `P̄ = c·D P D`, `q̄ = c·D q`,
/// `Ā = E A D`, `l̄ = E l`, `ū = E u`.
struct Scaled {
    n: usize,
    m: usize,
    p: CscMatrix,
    p_upper: CscMatrix,
    q: Vec<f64>,
    a: CscMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    /// Unscaled bounds, for certificates.
    l_raw: Vec<f64>,
    u_raw: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Residuals {
    prim: f64,
    dual: f64,
    prim_scale: f64,
    dual_scale: f64,
}

impl Residuals {
    fn converged(&self, s: &SolverSettings, factor: f64) -> bool {
        self.prim <= factor * (s.eps_abs + s.eps_rel * self.prim_scale)
            && self.dual <= factor * (s.eps_abs + s.eps_rel * self.dual_scale)
    }

    fn normalized(&self) -> (f64, f64) {
        (
            self.prim / (1.0 + self.prim_scale),
            self.dual / (1.0 + self.dual_scale),
        )
    }

    fn worst(&self) -> f64 {
        let (p, d) = self.normalized();
        p.max(d)
    }
}

fn equilibration_factor(norm: f64) -> f64 {
    if norm < SCALING_MIN {
        1.0
    } else {
        1.0 / norm.min(SCALING_MAX).sqrt()
    }
}

impl Scaled {
    fn new(p: &QuadraticProgram, iters: usize) -> Self {
        let n = p.num_vars;
        let a_raw = p.a_eq.vstack(&p.a_in);
        let m = a_raw.nrows;
        let mut l_raw = p.b_eq.clone();
        l_raw.extend_from_slice(&p.l_in);
        let mut u_raw = p.b_eq.clone();
        u_raw.extend_from_slice(&p.u_in);

        let mut pm = p.q_matrix.clone();
        let mut a = a_raw;
        let mut q = p.q.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;
        for _ in 0..iters {
            let p_cols = pm.col_inf_norms();
            let a_cols = a.col_inf_norms();
            let a_rows = a.row_inf_norms();
            let dn: Vec<f64> = (0..n)
                .map(|j| equilibration_factor(p_cols[j].max(a_cols[j])))
                .collect();
            let dm: Vec<f64> = a_rows.iter().map(|&r| equilibration_factor(r)).collect();
            pm.scale(&dn, &dn);
            a.scale(&dm, &dn);
            for j in 0..n {
                q[j] *= dn[j];
                d[j] *= dn[j];
            }
            for i in 0..m {
                e[i] *= dm[i];
            }

            let p_cols = pm.col_inf_norms();
            let mean_p = if n > 0 {
                p_cols.iter().sum::<f64>() / n as f64
            } else {
                0.0
            };
            let cost = mean_p.max(inf_norm(&q));
            let gamma = if cost < SCALING_MIN {
                1.0
            } else {
                1.0 / cost.min(SCALING_MAX)
            };
            pm.values.iter_mut().for_each(|v| *v *= gamma);
            q.iter_mut().for_each(|v| *v *= gamma);
            c *= gamma;
        }

        let l = l_raw.iter().zip(&e).map(|(v, s)| v * s).collect();
        let u = u_raw.iter().zip(&e).map(|(v, s)| v * s).collect();
        let p_upper = pm.upper_triangle();
        Self {
            n,
            m,
            p: pm,
            p_upper,
            q,
            a,
            l,
            u,
            d,
            e,
            c,
            l_raw,
            u_raw,
        }
    }

    fn is_equality(&self, i: usize) -> bool {
        let (lo, hi) = (self.l_raw[i], self.u_raw[i]);
        lo.is_finite() && hi.is_finite() && hi - lo <= 1e-10 * (1.0 + hi.abs())
    }

    fn rho_vector(&self, rho: f64) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                if self.l[i] == f64::NEG_INFINITY && self.u[i] == f64::INFINITY {
                    RHO_MIN
                } else if self.is_equality(i) {
                    (rho * RHO_EQ_FACTOR).min(RHO_MAX)
                } else {
                    rho
                }
            })
            .collect()
    }

    /// Upper triangle of `[[P̄ + σI, Āᵀ], [Ā, −diag(1/ρ)]]`.
    fn kkt(&self, sigma: f64, rho: &[f64]) -> CscMatrix {
        let n = self.n;
        let mut trip: Vec<(usize, usize, f64)> =
            Vec::with_capacity(self.p_upper.nnz() + self.a.nnz() + n + self.m);
        trip.extend(self.p_upper.triplets());
        trip.extend((0..n).map(|j| (j, j, sigma)));
        trip.extend(self.a.triplets().map(|(i, j, v)| (j, n + i, v)));
        trip.extend((0..self.m).map(|i| (n + i, n + i, -1.0 / rho[i])));
        CscMatrix::from_triplets(n + self.m, n + self.m, &trip)
    }

    /// Unscaled residuals of a scaled iterate.
    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let (n, m) = (self.n, self.m);
        let mut ax = vec![0.0; m];
        self.a.mul_vec(x, &mut ax);
        let mut prim = 0.0_f64;
        let mut prim_scale = 0.0_f64;
        for i in 0..m {
            let inv = 1.0 / self.e[i];
            prim = prim.max(((ax[i] - z[i]) * inv).abs());
            prim_scale = prim_scale.max((ax[i] * inv).abs()).max((z[i] * inv).abs());
        }

        let mut px = vec![0.0; n];
        self.p.mul_vec(x, &mut px);
        let mut aty = vec![0.0; n];
        self.a.tr_mul_vec(y, &mut aty);
        let mut dual = 0.0_f64;
        let mut dual_scale = 0.0_f64;
        for j in 0..n {
            let inv = 1.0 / (self.c * self.d[j]);
            dual = dual.max(((px[j] + self.q[j] + aty[j]) * inv).abs());
            dual_scale = dual_scale
                .max((px[j] * inv).abs())
                .max((aty[j] * inv).abs())
                .max((self.q[j] * inv).abs());
        }
        Residuals {
            prim,
            dual,
            prim_scale,
            dual_scale,
        }
    }

    /// Scaled-space balance of primal and dual residuals used to adapt ρ.
    fn rho_estimate(&self, rho: f64, x: &[f64], z: &[f64], y: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.m];
        self.a.mul_vec(x, &mut ax);
        let r_p: Vec<f64> = ax.iter().zip(z).map(|(a, b)| a - b).collect();
        let prim = inf_norm(&r_p) / (inf_norm(&ax).max(inf_norm(z)) + 1e-30);

        let mut px = vec![0.0; self.n];
        self.p.mul_vec(x, &mut px);
        let mut aty = vec![0.0; self.n];
        self.a.tr_mul_vec(y, &mut aty);
        let r_d: Vec<f64> = (0..self.n).map(|j| px[j] + self.q[j] + aty[j]).collect();
        let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&self.q));
        let dual = inf_norm(&r_d) / (dual_scale + 1e-30);
        (rho * (prim / (dual + 1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX)
    }

    /// Farkas certificate check on the multiplier step `δy` (scaled).
    fn primal_infeasible(&self, dy: &[f64], eps: f64) -> Option<Vec<f64>> {
        let dy_u: Vec<f64> = dy.iter().zip(&self.e).map(|(v, s)| v * s).collect();
        let norm = inf_norm(&dy_u);
        if norm <= 1e-30 {
            return None;
        }
        let mut support = 0.0;
        for i in 0..self.m {
            let v = dy_u[i];
            if v > 0.0 {
                if !self.u_raw[i].is_finite() {
                    return None;
                }
                support += self.u_raw[i] * v;
            } else if v < 0.0 {
                if !self.l_raw[i].is_finite() {
                    return None;
                }
                support += self.l_raw[i] * v;
            }
        }
        if support >= -eps * norm {
            return None;
        }
        let mut aty = vec![0.0; self.n];
        self.a.tr_mul_vec(dy, &mut aty);
        let worst = aty
            .iter()
            .zip(&self.d)
            .fold(0.0_f64, |w, (v, d)| w.max((v / d).abs()));
        (worst <= eps * norm).then(|| dy_u.iter().map(|v| v / norm).collect())
    }

    /// Recession-direction check on the primal step `δx` (scaled).
    fn dual_infeasible(&self, dx: &[f64], eps: f64) -> Option<Vec<f64>> {
        let dx_u: Vec<f64> = dx.iter().zip(&self.d).map(|(v, s)| v * s).collect();
        let norm = inf_norm(&dx_u);
        if norm <= 1e-30 {
            return None;
        }
        let tol = eps * norm;
        let qdx: f64 = self.q.iter().zip(dx).map(|(a, b)| a * b).sum::<f64>() / self.c;
        if qdx >= -tol {
            return None;
        }
        let mut pdx = vec![0.0; self.n];
        self.p.mul_vec(dx, &mut pdx);
        for j in 0..self.n {
            if (pdx[j] / (self.c * self.d[j])).abs() > tol {
                return None;
            }
        }
        let mut adx = vec![0.0; self.m];
        self.a.mul_vec(dx, &mut adx);
        for i in 0..self.m {
            let v = adx[i] / self.e[i];
            if self.u_raw[i].is_finite() && v > tol {
                return None;
            }
            if self.l_raw[i].is_finite() && v < -tol {
                return None;
            }
        }
        Some(dx_u.iter().map(|v| v / norm).collect())
    }

    /// Solves the equality-constrained problem on the guessed active set.
    /// At degenerate vertices the guess over-determines the point; the
    /// inequality with the most wrong-signed multiplier is then released and
    /// the reduced system solved again, one row at a time.
    fn polish(&self, z: &[f64], y: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = self.n;
        // (row, bound, sign): sign -1 lower, +1 upper, 0 equality.
        let mut active: Vec<(usize, f64, i8)> = Vec::new();
        for i in 0..self.m {
            if self.is_equality(i) {
                active.push((i, self.l[i], 0));
            } else if z[i] - self.l[i] < -y[i] || (z[i] == self.l[i] && y[i] <= 0.0) {
                active.push((i, self.l[i], -1));
            } else if self.u[i] - z[i] < y[i] || (z[i] == self.u[i] && y[i] >= 0.0) {
                active.push((i, self.u[i], 1));
            }
        }
        let mut rows_of: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.m];
        for (i, j, v) in self.a.triplets() {
            rows_of[i].push((j, v));
        }

        let mut sol = self.solve_active(&active, &rows_of)?;
        let mut ax = vec![0.0; self.m];
        let mut seen: Vec<Vec<(usize, i8)>> = Vec::new();
        let mut bland = false;
        let mut settled = false;
        for _ in 0..POLISH_ROUNDS {
            self.a.mul_vec(&sol[..n], &mut ax);
            let mut in_set = vec![false; self.m];
            for &(i, _, _) in &active {
                in_set[i] = true;
            }
            let violated: Vec<(usize, f64, f64, i8)> = (0..self.m)
                .filter(|&i| !in_set[i])
                .filter_map(|i| {
                    let tol = 1e-9 * (1.0 + ax[i].abs());
                    if ax[i] < self.l[i] - tol {
                        Some((i, self.l[i] - ax[i], self.l[i], -1))
                    } else if ax[i] > self.u[i] + tol {
                        Some((i, ax[i] - self.u[i], self.u[i], 1))
                    } else {
                        None
                    }
                })
                .collect();
            let scale = sol[n..].iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            let wrong: Vec<(usize, f64)> = active
                .iter()
                .enumerate()
                .map(|(r, &(_, _, sign))| (r, f64::from(sign) * sol[n + r]))
                .filter(|&(_, v)| v < -POLISH_SIGN_TOL * scale)
                .collect();
            if violated.is_empty() && wrong.is_empty() {
                settled = true;
                break;
            }
            // Largest violation first; once an active set repeats, switch to
            // lowest-index choices so degenerate vertices cannot cycle.
            let key: Vec<(usize, i8)> = active.iter().map(|&(i, _, s)| (i, s)).collect();
            bland = bland || seen.contains(&key);
            seen.push(key);
            let add = if bland {
                violated.iter().min_by_key(|v| v.0)
            } else {
                violated.iter().max_by(|a, b| a.1.total_cmp(&b.1))
            };
            if let Some(&(i, _, bound, sign)) = add {
                active.push((i, bound, sign));
            } else {
                let r = if bland {
                    wrong.iter().min_by_key(|&&(r, _)| active[r].0).expect("nonempty").0
                } else {
                    wrong.iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty").0
                };
                active.remove(r);
            }
            sol = self.solve_active(&active, &rows_of)?;
        }

        if !settled {
            return None;
        }
        let xp = sol[..n].to_vec();
        let mut yp = vec![0.0; self.m];
        for (r, &(i, _, _)) in active.iter().enumerate() {
            let v = sol[n + r];
            // Leftover wrong-signed values are below the release tolerance.
            yp[i] = v;
        }
        let mut zp = vec![0.0; self.m];
        self.a.mul_vec(&xp, &mut zp);
        for i in 0..self.m {
            zp[i] = zp[i].clamp(self.l[i], self.u[i]);
        }
        Some((xp, zp, yp))
    }

    /// Regularized KKT solve with iterative refinement for one active set.
    fn solve_active(
        &self,
        active: &[(usize, f64, i8)],
        rows_of: &[Vec<(usize, f64)>],
    ) -> Option<Vec<f64>> {
        let n = self.n;
        let k = active.len();
        let mut trip: Vec<(usize, usize, f64)> = self.p_upper.triplets().collect();
        trip.extend((0..n).map(|j| (j, j, POLISH_DELTA)));
        for (r, &(i, _, _)) in active.iter().enumerate() {
            for &(j, v) in &rows_of[i] {
                trip.push((j, n + r, v));
            }
            trip.push((n + r, n + r, -POLISH_DELTA));
        }
        let kkt = CscMatrix::from_triplets(n + k, n + k, &trip);
        let mut factor = SymbolicLdl::analyze(&kkt).ok()?.factor(&kkt.values).ok()?;

        let mut rhs: Vec<f64> = self.q.iter().map(|v| -v).collect();
        rhs.extend(active.iter().map(|&(_, b, _)| b));
        let mut sol = rhs.clone();
        factor.solve(&mut sol);

        // Refine against the unregularized system.
        let apply = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n + k];
            let mut px = vec![0.0; n];
            self.p.mul_vec(&v[..n], &mut px);
            out[..n].copy_from_slice(&px);
            for (r, &(i, _, _)) in active.iter().enumerate() {
                let mut acc = 0.0;
                for &(j, a) in &rows_of[i] {
                    acc += a * v[j];
                    out[j] += a * v[n + r];
                }
                out[n + r] = acc;
            }
            out
        };
        for _ in 0..POLISH_REFINE_STEPS {
            let kv = apply(&sol);
            let mut corr: Vec<f64> = rhs.iter().zip(&kv).map(|(a, b)| a - b).collect();
            factor.solve(&mut corr);
            for (s, c) in sol.iter_mut().zip(&corr) {
                *s += c;
            }
        }
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }

    fn unscale(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let xu = x.iter().zip(&self.d).map(|(v, s)| v * s).collect();
        let yu = y.iter().zip(&self.e).map(|(v, s)| v * s / self.c).collect();
        (xu, yu)
    }
}

struct Kkt {
    factor: LdlFactor,
}

impl Kkt {
    fn new(pb: &Scaled, sigma: f64, rho: &[f64]) -> Result<Self, QpError> {
        let k = pb.kkt(sigma, rho);
        let factor = SymbolicLdl::analyze(&k)?.factor(&k.values)?;
        Ok(Self { factor })
    }

    fn update(&mut self, pb: &Scaled, sigma: f64, rho: &[f64]) -> Result<(), QpError> {
        let k = pb.kkt(sigma, rho);
        self.factor.refactor(&k.values)?;
        Ok(())
    }
}

/// Solves a convex QP.
///
/// The result is a deterministic function of `p` and `settings`.
pub fn solve_qp(p: &QuadraticProgram, settings: &SolverSettings) -> Result<QpSolution, QpError> {
    p.validate()?;
    let pb = Scaled::new(p, settings.scaling_iters);
    let (n, m) = (pb.n, pb.m);
    let sigma = settings.sigma;
    let alpha = settings.alpha;
    let mut rho = settings.rho;
    let mut rho_vec = pb.rho_vector(rho);
    let mut kkt = Kkt::new(&pb, sigma, &rho_vec)?;

    let mut x = vec![0.0; n];
    let mut z: Vec<f64> = (0..m).map(|i| 0.0_f64.clamp(pb.l[i], pb.u[i])).collect();
    let mut y = vec![0.0; m];
    let mut x_prev = vec![0.0; n];
    let mut z_prev = vec![0.0; m];
    let mut y_prev = vec![0.0; m];
    let mut rhs = vec![0.0; n + m];
    let mut z_relaxed = vec![0.0; m];

    let check = settings.check_interval.max(1);
    let mut best: Option<(Residuals, Vec<f64>, Vec<f64>)> = None;
    let mut polish_gate = f64::INFINITY;
    let mut polish_attempts = 0;
    let mut loose: Option<(Residuals, Vec<f64>, Vec<f64>)> = None;
    let mut rho_updates = 0u32;
    let mut next_rho_update = 0;

    let finish = |x: &[f64], y: &[f64], res: Residuals, status, iters, polished, cert| {
        let (z_out, y_out) = pb.unscale(x, y);
        let (prim, dual) = res.normalized();
        QpSolution {
            objective: p.objective(&z_out),
            z: z_out,
            y: y_out,
            status,
            primal_residual: prim,
            dual_residual: dual,
            iterations: iters,
            polished,
            certificate: cert,
        }
    };

    for iter in 1..=settings.max_iter {
        x_prev.copy_from_slice(&x);
        z_prev.copy_from_slice(&z);
        y_prev.copy_from_slice(&y);

        for j in 0..n {
            rhs[j] = sigma * x[j] - pb.q[j];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho_vec[i];
        }
        kkt.factor.solve(&mut rhs);

        for j in 0..n {
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x_prev[j];
        }
        for i in 0..m {
            let zt = z_prev[i] + (rhs[n + i] - y_prev[i]) / rho_vec[i];
            z_relaxed[i] = alpha * zt + (1.0 - alpha) * z_prev[i];
            z[i] = (z_relaxed[i] + y_prev[i] / rho_vec[i]).clamp(pb.l[i], pb.u[i]);
            y[i] = y_prev[i] + rho_vec[i] * (z_relaxed[i] - z[i]);
        }

        if iter % check != 0 && iter != settings.max_iter {
            continue;
        }

        let res = pb.residuals(&x, &z, &y);
        if best.as_ref().is_none_or(|(b, _, _)| res.worst() < b.worst()) {
            best = Some((res, x.clone(), y.clone()));
        }
        let converged = res.converged(settings, 1.0);
        if settings.polish
            && res.converged(settings, POLISH_WINDOW)
            && (converged || res.worst() < polish_gate)
            && polish_attempts < POLISH_ATTEMPTS
        {
            polish_attempts += 1;
            polish_gate = POLISH_GATE_DECAY * res.worst();
            if let Some((xp, zp, yp)) = pb.polish(&z, &y) {
                let pres = pb.residuals(&xp, &zp, &yp);
                if pres.converged(settings, 1.0) && (!converged || pres.worst() <= res.worst()) {
                    return Ok(finish(&xp, &yp, pres, QpStatus::Optimal, iter, true, None));
                }
            }
        }
        // Without a polished vertex, keep iterating for a tighter point; the
        // loose one is still returned if the iteration limit arrives first.
        if converged && (!settings.polish || res.converged(settings, UNPOLISHED_TIGHTEN)) {
            return Ok(finish(&x, &y, res, QpStatus::Optimal, iter, false, None));
        }
        if converged && loose.as_ref().is_none_or(|(b, _, _)| res.worst() < b.worst()) {
            loose = Some((res, x.clone(), y.clone()));
        }

        let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
        if let Some(cert) = pb.primal_infeasible(&dy, settings.eps_prim_inf) {
            return Ok(finish(&x, &y, res, QpStatus::Infeasible, iter, false, Some(cert)));
        }
        let dx: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
        if let Some(cert) = pb.dual_infeasible(&dx, settings.eps_dual_inf) {
            return Ok(finish(&x, &y, res, QpStatus::Unbounded, iter, false, Some(cert)));
        }

        if settings.adaptive_rho && m > 0 && iter >= next_rho_update {
            let new_rho = pb.rho_estimate(rho, &x, &z, &y);
            if new_rho > rho * RHO_REFACTOR_RATIO || new_rho < rho / RHO_REFACTOR_RATIO {
                rho = new_rho;
                rho_vec = pb.rho_vector(rho);
                kkt.update(&pb, sigma, &rho_vec)?;
                // Back off geometrically so ρ cannot keep oscillating.
                rho_updates += 1;
                next_rho_update = iter + check * (1 << rho_updates.min(10));
            }
        }
    }

    if let Some((res, lx, ly)) = loose {
        return Ok(finish(&lx, &ly, res, QpStatus::Optimal, settings.max_iter, false, None));
    }
    let (res, bx, by) = best.unwrap_or_else(|| (pb.residuals(&x, &z, &y), x.clone(), y.clone()));
    Ok(finish(&bx, &by, res, QpStatus::MaxIter, settings.max_iter, false, None))
}
