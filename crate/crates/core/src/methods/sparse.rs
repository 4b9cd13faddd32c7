//! Label-regression fitters with joint ℓ21 feature selection.
//!
//! Both solvers are majorize-minimize loops over the Huber-smoothed ℓ21 norm
//! (rows below `eps` are penalized quadratically). The majorizer touches the
//! objective at the current iterate, so every accepted step lowers the
//! recorded objective.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{centered, MethodKind, SubspaceModel};
use crate::dataset_io::PairedMultimodalDataset;
use crate::error::{Result, XmsError};
use crate::numerics::{default_ridge, l21_reweight, multimodal_graph, sym_eigen_desc};

/// Smoothing of the trace norm, `tr((ZᵀZ + ε·I)^{1/2})`.
const TRACE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseCoupledConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iters: usize,
    /// Relative objective decrease below which iteration stops.
    pub tol: f64,
    /// Neighbours per sample in the JFSSL multimodal graph.
    pub graph_k: usize,
    /// Row-norm floor of the smoothed ℓ21 norm.
    pub eps: f64,
}

impl Default for SparseCoupledConfig {
    fn default() -> Self {
        SparseCoupledConfig {
            lambda1: 0.1,
            lambda2: 0.1,
            max_iters: 200,
            tol: 1e-6,
            graph_k: 5,
            eps: 1e-8,
        }
    }
}

impl SparseCoupledConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) || !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return Err(XmsError::InvalidArgument(
                "lambda1 and lambda2 must be finite and >= 0".into(),
            ));
        }
        if self.max_iters == 0 || !(self.tol > 0.0) || !(self.eps > 0.0) {
            return Err(XmsError::InvalidArgument(
                "need max_iters >= 1, tol > 0 and eps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Minimum-norm least-squares solution of `Xᵀ·W = Y` for `x` (`d × n`)
/// and `y` (`n × c`).
pub fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xt = x.transpose();
    let svd = xt.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * x.nrows().max(x.ncols()) as f64;
    svd.solve(y, tol)
        .map_err(|e| XmsError::Numerical(format!("least squares: {e}")))
}

/// Huber-smoothed `‖W‖₂₁`: rows with norm below `eps` contribute
/// `‖w‖²/(2·eps) + eps/2`.
fn smoothed_l21(w: &DMatrix<f64>, eps: f64) -> f64 {
    w.row_iter()
        .map(|r| {
            let t = r.norm();
            if t >= eps {
                t
            } else {
                t * t / (2.0 * eps) + eps / 2.0
            }
        })
        .sum()
}

fn stacked_projection(xa: &DMatrix<f64>, xb: &DMatrix<f64>, wa: &DMatrix<f64>, wb: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, c) = (xa.ncols(), wa.ncols());
    let mut z = DMatrix::zeros(n, 2 * c);
    z.view_mut((0, 0), (n, c)).copy_from(&(xa.transpose() * wa));
    z.view_mut((0, c), (n, c)).copy_from(&(xb.transpose() * wb));
    z
}

fn smoothed_trace_norm(z: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen_desc(&(z.transpose() * z));
    vals.iter().map(|v| (v.max(0.0) + TRACE_EPS).sqrt()).sum()
}

/// `(ZᵀZ + ε·I)^{-1/2}`.
fn trace_norm_weight(z: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(&(z.transpose() * z));
    let s = vals.map(|v| 1.0 / (v.max(0.0) + TRACE_EPS).sqrt());
    &vecs * DMatrix::from_diagonal(&s) * vecs.transpose()
}

/// LCFS objective with smoothed ℓ21 and trace norms:
/// `½(‖XaᵀWa − Y‖² + ‖XbᵀWb − Y‖²) + λ1(‖Wa‖₂₁ + ‖Wb‖₂₁) + λ2‖[XaᵀWa XbᵀWb]‖_*`.
pub fn lcfs_objective(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    y: &DMatrix<f64>,
    wa: &DMatrix<f64>,
    wb: &DMatrix<f64>,
    config: &SparseCoupledConfig,
) -> f64 {
    let fit = (xa.transpose() * wa - y).norm_squared() + (xb.transpose() * wb - y).norm_squared();
    let mut obj = 0.5 * fit;
    if config.lambda1 > 0.0 {
        obj += config.lambda1 * (smoothed_l21(wa, config.eps) + smoothed_l21(wb, config.eps));
    }
    if config.lambda2 > 0.0 {
        obj += config.lambda2 * smoothed_trace_norm(&stacked_projection(xa, xb, wa, wb));
    }
    obj
}

/// JFSSL objective with the graph term `Ω = tr(FᵀLF)`, `F = [XaᵀWa; XbᵀWb]`,
/// for a `2n × 2n` Laplacian `laplacian`:
/// `‖XaᵀWa − Y‖² + ‖XbᵀWb − Y‖² + λ1(‖Wa‖₂₁ + ‖Wb‖₂₁) + λ2·Ω`.
pub fn jfssl_objective(
    xa: &DMatrix<f64>,
    xb: &DMatrix<f64>,
    y: &DMatrix<f64>,
    laplacian: &DMatrix<f64>,
    wa: &DMatrix<f64>,
    wb: &DMatrix<f64>,
    config: &SparseCoupledConfig,
) -> f64 {
    let fa = xa.transpose() * wa;
    let fb = xb.transpose() * wb;
    let mut obj = (&fa - y).norm_squared() + (&fb - y).norm_squared();
    if config.lambda1 > 0.0 {
        obj += config.lambda1 * (smoothed_l21(wa, config.eps) + smoothed_l21(wb, config.eps));
    }
    if config.lambda2 > 0.0 {
        let n = fa.nrows();
        let mut f = DMatrix::zeros(2 * n, fa.ncols());
        f.view_mut((0, 0), fa.shape()).copy_from(&fa);
        f.view_mut((n, 0), fb.shape()).copy_from(&fb);
        obj += config.lambda2 * (f.transpose() * laplacian * &f).trace();
    }
    obj
}

/// Shared per-fit quantities on centered data.
struct Problem {
    xa: DMatrix<f64>,
    xb: DMatrix<f64>,
    y: DMatrix<f64>,
    sa: DMatrix<f64>,
    sb: DMatrix<f64>,
    ya: DMatrix<f64>,
    yb: DMatrix<f64>,
    ma: DVector<f64>,
    mb: DVector<f64>,
}

impl Problem {
    fn new(train: &PairedMultimodalDataset) -> Self {
        let (xa, xb, ma, mb) = centered(train);
        let y = train.label_matrix().values().clone();
        Problem {
            sa: &xa * xa.transpose(),
            sb: &xb * xb.transpose(),
            ya: &xa * &y,
            yb: &xb * &y,
            xa,
            xb,
            y,
            ma,
            mb,
        }
    }

    /// Ridge least squares per modality, the warm start of both loops.
    fn ridge_start(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let solve = |s: &DMatrix<f64>, rhs: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let r = default_ridge(s).max(f64::MIN_POSITIVE);
            let m = s + DMatrix::identity(s.nrows(), s.nrows()) * r;
            cholesky(m, "ridge warm start").map(|ch| ch.solve(rhs))
        };
        Ok((solve(&self.sa, &self.ya)?, solve(&self.sb, &self.yb)?))
    }

    fn exact_least_squares(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((least_squares(&self.xa, &self.y)?, least_squares(&self.xb, &self.y)?))
    }
}

fn cholesky(m: DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| XmsError::Singular {
        context: context.to_string(),
    })
}

fn add_diagonal(m: &DMatrix<f64>, diag: &DVector<f64>, scale: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..diag.len() {
        out[(i, i)] += scale * diag[i];
    }
    out
}

/// Outcome of a majorize-minimize loop.
struct Iterated {
    wa: DMatrix<f64>,
    wb: DMatrix<f64>,
    trace: Vec<f64>,
    converged: bool,
}

/// Runs `step` until the relative decrease drops below `tol`. A step that
/// would raise the objective (rounding at the optimum) is rejected and ends
/// the loop.
fn iterate<S, F>(
    mut wa: DMatrix<f64>,
    mut wb: DMatrix<f64>,
    config: &SparseCoupledConfig,
    objective: F,
    mut step: S,
) -> Result<Iterated>
where
    S: FnMut(&DMatrix<f64>, &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)>,
    F: Fn(&DMatrix<f64>, &DMatrix<f64>) -> f64,
{
    let mut obj = objective(&wa, &wb);
    if !obj.is_finite() {
        return Err(XmsError::Diverged { iteration: 0 });
    }
    let mut trace = vec![obj];
    let mut converged = false;
    for iteration in 1..=config.max_iters {
        let (na, nb) = step(&wa, &wb)?;
        let next = objective(&na, &nb);
        if !next.is_finite() {
            return Err(XmsError::Diverged { iteration });
        }
        if next > obj {
            converged = true;
            break;
        }
        let rel = (obj - next) / obj.abs().max(f64::MIN_POSITIVE);
        wa = na;
        wb = nb;
        obj = next;
        trace.push(obj);
        if rel < config.tol {
            converged = true;
            break;
        }
    }
    Ok(Iterated {
        wa,
        wb,
        trace,
        converged,
    })
}

fn finish(method: MethodKind, problem: Problem, it: Iterated, config: &SparseCoupledConfig) -> Result<SubspaceModel> {
    let c = problem.y.ncols();
    let mut model = SubspaceModel::new(method, it.wa, it.wb, problem.ma, problem.mb)?;
    let hp = &mut model.hyperparams;
    hp.insert("d".into(), c as f64);
    hp.insert("lambda1".into(), config.lambda1);
    hp.insert("lambda2".into(), config.lambda2);
    hp.insert("eps".into(), config.eps);
    hp.insert("iterations".into(), (it.trace.len() - 1) as f64);
    hp.insert("converged".into(), if it.converged { 1.0 } else { 0.0 });
    if method == MethodKind::Jfssl {
        hp.insert("graph_k".into(), config.graph_k as f64);
    }
    model.diagnostics.insert("objective_trace".into(), it.trace);
    Ok(model)
}

/// Learning coupled feature spaces: coupled label regression with ℓ21
/// feature selection and a trace-norm coupling of the projected data.
///
/// The trace norm is handled by its variational majorizer
/// `½·tr(D·ZᵀZ)` with `D = (Z₀ᵀZ₀ + ε·I)^{-1/2}`; each step then solves a
/// coupled linear system, by preconditioned conjugate gradients warm-started
/// at the current iterate. At `λ1 = λ2 = 0` the minimum-norm least-squares
/// solution is returned directly.
pub fn fit_lcfs(train: &PairedMultimodalDataset, config: &SparseCoupledConfig) -> Result<SubspaceModel> {
    config.validate()?;
    let p = Problem::new(train);
    let cfg = *config;
    let objective = |wa: &DMatrix<f64>, wb: &DMatrix<f64>| lcfs_objective(&p.xa, &p.xb, &p.y, wa, wb, &cfg);

    let it = if cfg.lambda1 == 0.0 && cfg.lambda2 == 0.0 {
        let (wa, wb) = p.exact_least_squares()?;
        let trace = vec![objective(&wa, &wb)];
        Iterated {
            wa,
            wb,
            trace,
            converged: true,
        }
    } else {
        let (wa, wb) = p.ridge_start()?;
        let sab = &p.xa * p.xb.transpose();
        iterate(wa, wb, &cfg, objective, |wa, wb| {
            let ga = l21_reweight(wa, cfg.eps);
            let gb = l21_reweight(wb, cfg.eps);
            if cfg.lambda2 == 0.0 {
                let ca = cholesky(
                    add_diagonal(&p.sa, &ga, 2.0 * cfg.lambda1),
                    "LCFS system for modality a",
                )?;
                let cb = cholesky(
                    add_diagonal(&p.sb, &gb, 2.0 * cfg.lambda1),
                    "LCFS system for modality b",
                )?;
                return Ok((ca.solve(&p.ya), cb.solve(&p.yb)));
            }
            let d = trace_norm_weight(&stacked_projection(&p.xa, &p.xb, wa, wb));
            let sys = CoupledSystem {
                sa: &p.sa,
                sb: &p.sb,
                sab: &sab,
                ga,
                gb,
                d,
                lambda1: cfg.lambda1,
                lambda2: cfg.lambda2,
            };
            sys.solve(wa, wb, &p.ya, &p.yb, INNER_RTOL)
        })?
    };
    finish(MethodKind::Lcfs, p, it, &cfg)
}

/// Inner CG stops once the residual falls by this factor. Any warm-started
/// CG step lowers the majorizer, so the outer objective stays monotone.
const INNER_RTOL: f64 = 1e-3;

/// Preconditioner factors for one column of `Wa` and `Wb`.
type ColumnFactors = (Option<Cholesky<f64, Dyn>>, Option<Cholesky<f64, Dyn>>);

/// Linear system of one LCFS step:
/// `(Sa + 2λ1·Ga)Wa + λ2(Sa·Wa·Daa + Sab·Wb·Dba) = Xa·Y` and its mirror.
struct CoupledSystem<'a> {
    sa: &'a DMatrix<f64>,
    sb: &'a DMatrix<f64>,
    sab: &'a DMatrix<f64>,
    ga: DVector<f64>,
    gb: DVector<f64>,
    d: DMatrix<f64>,
    lambda1: f64,
    lambda2: f64,
}

impl CoupledSystem<'_> {
    fn apply(&self, wa: &DMatrix<f64>, wb: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let c = wa.ncols();
        let daa = self.d.view((0, 0), (c, c));
        let dab = self.d.view((0, c), (c, c));
        let dba = self.d.view((c, 0), (c, c));
        let dbb = self.d.view((c, c), (c, c));
        let saw = self.sa * wa;
        let sbw = self.sb * wb;
        let mut oa = &saw + &saw * daa * self.lambda2 + self.sab * wb * dba * self.lambda2;
        let mut ob = &sbw + &sbw * dbb * self.lambda2 + self.sab.tr_mul(wa) * dab * self.lambda2;
        for (mut row, (g, w)) in oa.row_iter_mut().zip(self.ga.iter().zip(wa.row_iter())) {
            row += w * (2.0 * self.lambda1 * g);
        }
        for (mut row, (g, w)) in ob.row_iter_mut().zip(self.gb.iter().zip(wb.row_iter())) {
            row += w * (2.0 * self.lambda1 * g);
        }
        (oa, ob)
    }

    /// Per-column block-diagonal factors `(1 + λ2·D_jj)·S + 2λ1·G`.
    fn preconditioner(&self) -> Vec<ColumnFactors> {
        let c = self.d.nrows() / 2;
        let factor = |s: &DMatrix<f64>, g: &DVector<f64>, djj: f64| {
            let mut m = s * (1.0 + self.lambda2 * djj);
            m = add_diagonal(&m, g, 2.0 * self.lambda1);
            let jitter = 1e-12 * (m.trace() / m.nrows().max(1) as f64).max(f64::MIN_POSITIVE);
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            Cholesky::new(m)
        };
        (0..c)
            .map(|j| {
                (
                    factor(self.sa, &self.ga, self.d[(j, j)]),
                    factor(self.sb, &self.gb, self.d[(c + j, c + j)]),
                )
            })
            .collect()
    }

    fn precondition(factors: &[ColumnFactors], ra: &DMatrix<f64>, rb: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut za = ra.clone();
        let mut zb = rb.clone();
        for (j, (fa, fb)) in factors.iter().enumerate() {
            if let Some(f) = fa {
                za.set_column(j, &f.solve(&ra.column(j).into_owned()));
            }
            if let Some(f) = fb {
                zb.set_column(j, &f.solve(&rb.column(j).into_owned()));
            }
        }
        (za, zb)
    }

    /// Preconditioned CG from `(wa, wb)` until the residual shrinks by `rtol`;
    /// the quadratic decreases every step.
    fn solve(
        &self,
        wa: &DMatrix<f64>,
        wb: &DMatrix<f64>,
        ya: &DMatrix<f64>,
        yb: &DMatrix<f64>,
        rtol: f64,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let factors = self.preconditioner();
        let (mut xa, mut xb) = (wa.clone(), wb.clone());
        let (aa, ab) = self.apply(&xa, &xb);
        let (mut ra, mut rb) = (ya - aa, yb - ab);
        let (mut za, mut zb) = Self::precondition(&factors, &ra, &rb);
        let (mut pa, mut pb) = (za.clone(), zb.clone());
        let mut rz = ra.dot(&za) + rb.dot(&zb);
        let r0 = (ra.norm_squared() + rb.norm_squared()).sqrt();
        let target = (1e-12 * (ya.norm_squared() + yb.norm_squared()).sqrt()).max(rtol * r0);
        let max_steps = 10 * (wa.len() + wb.len()).max(10);
        for _ in 0..max_steps {
            if (ra.norm_squared() + rb.norm_squared()).sqrt() <= target || rz <= 0.0 {
                break;
            }
            let (qa, qb) = self.apply(&pa, &pb);
            let curv = pa.dot(&qa) + pb.dot(&qb);
            if !(curv > 0.0) {
                break;
            }
            let alpha = rz / curv;
            xa += &pa * alpha;
            xb += &pb * alpha;
            ra -= &qa * alpha;
            rb -= &qb * alpha;
            (za, zb) = Self::precondition(&factors, &ra, &rb);
            let rz_next = ra.dot(&za) + rb.dot(&zb);
            let beta = rz_next / rz;
            rz = rz_next;
            pa = &za + &pa * beta;
            pb = &zb + &pb * beta;
        }
        Ok((xa, xb))
    }
}

/// Joint feature selection and subspace learning with a multimodal graph
/// regularizer.
///
/// Alternates exact block updates
/// `(Sp + λ1·Gp + λ2·Xp·Lpp·Xpᵀ)Wp = Xp·Y − λ2·Xp·Lpq·Xqᵀ·Wq` for `p = a`
/// then `p = b`, refreshing the ℓ21 weights `Gp` before each block. At
/// `λ1 = λ2 = 0` the minimum-norm least-squares solution is returned
/// directly.
pub fn fit_jfssl(train: &PairedMultimodalDataset, config: &SparseCoupledConfig) -> Result<SubspaceModel> {
    config.validate()?;
    let cfg = *config;
    let p = Problem::new(train);
    // graph term restricted to each modality, Ω = tr(WaᵀGaWa) + 2tr(WaᵀGabWb) + tr(WbᵀGbWb)
    let (ga, gb, gab) = if cfg.lambda2 > 0.0 {
        if cfg.graph_k == 0 {
            return Err(XmsError::InvalidArgument("JFSSL needs graph_k >= 1".into()));
        }
        let lap = multimodal_graph(&p.xa, &p.xb, &train.labels, cfg.graph_k)?.laplacian;
        let n = p.xa.ncols();
        (
            &p.xa * lap.view((0, 0), (n, n)) * p.xa.transpose(),
            &p.xb * lap.view((n, n), (n, n)) * p.xb.transpose(),
            &p.xa * lap.view((0, n), (n, n)) * p.xb.transpose(),
        )
    } else {
        let (da, db) = (p.xa.nrows(), p.xb.nrows());
        (DMatrix::zeros(da, da), DMatrix::zeros(db, db), DMatrix::zeros(da, db))
    };
    let objective = |wa: &DMatrix<f64>, wb: &DMatrix<f64>| {
        let mut obj = (p.xa.transpose() * wa - &p.y).norm_squared() + (p.xb.transpose() * wb - &p.y).norm_squared();
        if cfg.lambda1 > 0.0 {
            obj += cfg.lambda1 * (smoothed_l21(wa, cfg.eps) + smoothed_l21(wb, cfg.eps));
        }
        if cfg.lambda2 > 0.0 {
            let omega = wa.dot(&(&ga * wa)) + 2.0 * wa.dot(&(&gab * wb)) + wb.dot(&(&gb * wb));
            obj += cfg.lambda2 * omega;
        }
        obj
    };

    let it = if cfg.lambda1 == 0.0 && cfg.lambda2 == 0.0 {
        let (wa, wb) = p.exact_least_squares()?;
        let trace = vec![objective(&wa, &wb)];
        Iterated {
            wa,
            wb,
            trace,
            converged: true,
        }
    } else {
        let (wa, wb) = p.ridge_start()?;
        let ka = &p.sa + &ga * cfg.lambda2;
        let kb = &p.sb + &gb * cfg.lambda2;
        let kab = &gab * cfg.lambda2;
        let advice = "use lambda1 > 0 or add a ridge";
        iterate(wa, wb, &cfg, objective, |wa, wb| {
            let ga = l21_reweight(wa, cfg.eps);
            let ca = cholesky(
                add_diagonal(&ka, &ga, cfg.lambda1),
                &format!("JFSSL system for modality a; {advice}"),
            )?;
            let na = ca.solve(&(&p.ya - &kab * wb));
            let gb = l21_reweight(wb, cfg.eps);
            let cb = cholesky(
                add_diagonal(&kb, &gb, cfg.lambda1),
                &format!("JFSSL system for modality b; {advice}"),
            )?;
            let nb = cb.solve(&(&p.yb - kab.tr_mul(&na)));
            Ok((na, nb))
        })?
    };
    finish(MethodKind::Jfssl, p, it, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::FeatureMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn classed(seed: u64, n: usize, c: usize, da: usize, db: usize) -> PairedMultimodalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % c + 1).collect();
        let ca = noise(&mut rng, da, c) * 2.0;
        let cb = noise(&mut rng, db, c) * 2.0;
        let xa = DMatrix::from_fn(da, n, |r, i| ca[(r, labels[i] - 1)]) + noise(&mut rng, da, n);
        let xb = DMatrix::from_fn(db, n, |r, i| cb[(r, labels[i] - 1)]) + noise(&mut rng, db, n);
        PairedMultimodalDataset::new(
            FeatureMatrix::new(xa).unwrap(),
            FeatureMatrix::new(xb).unwrap(),
            labels,
            c,
        )
        .unwrap()
    }

    fn cfg(lambda1: f64, lambda2: f64) -> SparseCoupledConfig {
        SparseCoupledConfig {
            lambda1,
            lambda2,
            ..Default::default()
        }
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn zero_lambdas_give_least_squares() {
        let ds = classed(51, 40, 3, 6, 5);
        let (xa, xb, _, _) = centered(&ds);
        let y = ds.label_matrix().values().clone();
        // normal equations oracle, full column rank here
        let oracle = |x: &DMatrix<f64>| (x * x.transpose()).lu().solve(&(x * &y)).unwrap();
        for fit in [fit_lcfs, fit_jfssl] {
            let m = fit(&ds, &cfg(0.0, 0.0)).unwrap();
            assert!(rel(&m.wa, &oracle(&xa)) <= 1e-6);
            assert!(rel(&m.wb, &oracle(&xb)) <= 1e-6);
            assert_eq!(m.dim(), 3);
        }
    }

    #[test]
    fn least_squares_is_minimum_norm_when_underdetermined() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let x = noise(&mut rng, 10, 4);
        let y = noise(&mut rng, 4, 2);
        let w = least_squares(&x, &y).unwrap();
        assert!((x.transpose() * &w - &y).amax() < 1e-10);
        // minimum norm ⇔ W lies in the row space of Xᵀ, i.e. W = X·α
        let alpha = (x.transpose() * &x).lu().solve(&y).unwrap();
        assert!(rel(&w, &(&x * alpha)) < 1e-8);
    }

    #[test]
    fn huge_lambda1_zeroes_uninformative_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let (n, d, s) = (60, 30, 1e8);
        let labels: Vec<usize> = (0..n).map(|i| i % 3 + 1).collect();
        let mut xa = noise(&mut rng, d, n);
        for i in 0..n {
            xa[(0, i)] = s * f64::from(u8::from(labels[i] == 1));
            xa[(1, i)] = s * f64::from(u8::from(labels[i] == 2));
        }
        let xb = noise(&mut rng, 4, n);
        let ds = PairedMultimodalDataset::new(
            FeatureMatrix::new(xa).unwrap(),
            FeatureMatrix::new(xb).unwrap(),
            labels,
            3,
        )
        .unwrap();
        let m = fit_lcfs(&ds, &cfg(1e6, 0.0)).unwrap();
        let norms: Vec<f64> = m.wa.row_iter().map(|r| r.norm()).collect();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        let small = norms.iter().filter(|&&v| v < 1e-6 * max).count();
        assert!(small as f64 >= 0.9 * d as f64, "{small} of {d} rows zeroed");
    }

    #[test]
    fn traces_are_monotone() {
        for seed in 0..6 {
            let ds = classed(60 + seed, 45, 3, 8, 6);
            type Fit = fn(&PairedMultimodalDataset, &SparseCoupledConfig) -> Result<SubspaceModel>;
            let cases: [(Fit, f64, f64); 4] = [
                (fit_lcfs, 0.5, 0.5),
                (fit_lcfs, 1.0, 0.0),
                (fit_jfssl, 0.5, 0.5),
                (fit_jfssl, 0.0, 1.0),
            ];
            for (fit, l1, l2) in cases {
                let m = fit(&ds, &cfg(l1, l2)).unwrap();
                let tr = m.objective_trace().unwrap();
                assert!(tr.len() >= 2);
                for w in tr.windows(2) {
                    assert!(w[1] <= w[0] + 1e-10, "{:?}", w);
                }
            }
        }
    }

    #[test]
    fn jfssl_trace_matches_dense_objective() {
        let ds = classed(57, 36, 3, 6, 5);
        let c = cfg(0.4, 0.7);
        let m = fit_jfssl(&ds, &c).unwrap();
        let p = Problem::new(&ds);
        let lap = multimodal_graph(&p.xa, &p.xb, &ds.labels, c.graph_k).unwrap().laplacian;
        let dense = jfssl_objective(&p.xa, &p.xb, &p.y, &lap, &m.wa, &m.wb, &c);
        let last = *m.objective_trace().unwrap().last().unwrap();
        assert!((dense - last).abs() <= 1e-9 * dense.abs().max(1.0), "{dense} vs {last}");
    }

    #[test]
    fn jfssl_without_graph_matches_lcfs_with_half_lambda1() {
        let ds = classed(54, 50, 3, 7, 5);
        let tight = |l1: f64| SparseCoupledConfig {
            lambda1: l1,
            lambda2: 0.0,
            tol: 1e-14,
            max_iters: 500,
            ..Default::default()
        };
        let l = fit_lcfs(&ds, &tight(0.3)).unwrap();
        let j = fit_jfssl(&ds, &tight(0.6)).unwrap();
        assert!(rel(&j.wa, &l.wa) < 1e-4);
        assert!(rel(&j.wb, &l.wb) < 1e-4);
    }

    #[test]
    fn coupled_step_matches_dense_solve() {
        let ds = classed(55, 30, 2, 4, 3);
        let p = Problem::new(&ds);
        let (wa, wb) = p.ridge_start().unwrap();
        let sab = &p.xa * p.xb.transpose();
        let sys = CoupledSystem {
            sa: &p.sa,
            sb: &p.sb,
            sab: &sab,
            ga: l21_reweight(&wa, 1e-8),
            gb: l21_reweight(&wb, 1e-8),
            d: trace_norm_weight(&stacked_projection(&p.xa, &p.xb, &wa, &wb)),
            lambda1: 0.2,
            lambda2: 0.7,
        };
        let (sa_, sb_) = sys.solve(&wa, &wb, &p.ya, &p.yb, 0.0).unwrap();
        // dense operator by probing unit matrices
        let (da, db, c) = (4, 3, 2);
        let m = (da + db) * c;
        let mut dense = DMatrix::zeros(m, m);
        for k in 0..m {
            let mut e = DVector::zeros(m);
            e[k] = 1.0;
            let ea = DMatrix::from_column_slice(da, c, &e.as_slice()[..da * c]);
            let eb = DMatrix::from_column_slice(db, c, &e.as_slice()[da * c..]);
            let (oa, ob) = sys.apply(&ea, &eb);
            let col: Vec<f64> = oa.iter().chain(ob.iter()).copied().collect();
            dense.set_column(k, &DVector::from_vec(col));
        }
        assert!((&dense - dense.transpose()).amax() < 1e-8 * dense.amax());
        let rhs: Vec<f64> = p.ya.iter().chain(p.yb.iter()).copied().collect();
        let x = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
        let got: Vec<f64> = sa_.iter().chain(sb_.iter()).copied().collect();
        let got = DVector::from_vec(got);
        assert!((&got - &x).norm() / x.norm() < 1e-8);
    }

    #[test]
    fn rejects_invalid_config() {
        let ds = classed(56, 20, 2, 3, 3);
        assert!(fit_lcfs(&ds, &cfg(-1.0, 0.0)).is_err());
        let bad = SparseCoupledConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(fit_jfssl(&ds, &bad).is_err());
    }
}
