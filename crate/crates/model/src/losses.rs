//! Training losses and the evaluation metric.
//!
//! Each loss exists twice: as a plain function on tensors and as a tape
//! operation with an analytic gradient. [`loss_registry`] maps the config's
//! loss names to tape implementations.

use std::sync::Arc;

use sgh_core::mesh::EdgeSet;
use sgh_core::registry::Registry;
use sgh_core::tensor::Tensor;

use crate::camera::CameraParams;
use crate::error::{argument, Result};
use crate::tape::{Tape, Var};

fn check_points(pred: &Tensor, gt: &Tensor) -> Result<()> {
    if pred.rank() != 2 || pred.cols() != 3 || pred.shape() != gt.shape() {
        return Err(argument(format!("expected two equal V x 3 tensors, got {:?} and {:?}", pred.shape(), gt.shape())));
    }
    Ok(())
}

/// Mean absolute coordinate difference.
pub fn loss_l1_mesh(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check_points(pred, gt)?;
    Ok(pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// Mean squared Euclidean distance per vertex.
pub fn loss_mse(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check_points(pred, gt)?;
    Ok(pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.rows() as f64)
}

/// Mean per-vertex Euclidean distance, meters in, millimeters out.
pub fn mpve(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check_points(pred, gt)?;
    let total: f64 = pred
        .data()
        .chunks_exact(3)
        .zip(gt.data().chunks_exact(3))
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt())
        .sum();
    Ok(1000.0 * total / pred.rows() as f64)
}

/// Nearest-neighbour queries by a sweep over points sorted on x.
pub struct SweepIndex<'a> {
    points: &'a [[f64; 3]],
    order: Vec<usize>,
    xs: Vec<f64>,
}

impl<'a> SweepIndex<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
        let xs = order.iter().map(|&i| points[i][0]).collect();
        Self { points, order, xs }
    }

    /// `(index, squared distance)` of the nearest point; ties go to the lower index.
    pub fn nearest(&self, q: [f64; 3]) -> (usize, f64) {
        let start = self.xs.partition_point(|&x| x < q[0]);
        let mut best = (usize::MAX, f64::INFINITY);
        let consider = |pos: usize, best: &mut (usize, f64)| {
            let i = self.order[pos];
            let p = self.points[i];
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d < best.1 || (d == best.1 && i < best.0) {
                *best = (i, d);
            }
        };
        for pos in start..self.xs.len() {
            if (self.xs[pos] - q[0]).powi(2) > best.1 {
                break;
            }
            consider(pos, &mut best);
        }
        for pos in (0..start).rev() {
            if (self.xs[pos] - q[0]).powi(2) > best.1 {
                break;
            }
            consider(pos, &mut best);
        }
        best
    }
}

fn directed_chamfer(from: &[[f64; 3]], to: &[[f64; 3]]) -> Vec<(usize, f64)> {
    let index = SweepIndex::new(to);
    from.iter().map(|&p| index.nearest(p)).collect()
}

/// Average of the two directed mean nearest-neighbour squared distances.
pub fn loss_chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(argument("chamfer distance needs two non-empty point sets"));
    }
    let ab: f64 = directed_chamfer(a, b).iter().map(|x| x.1).sum::<f64>() / a.len() as f64;
    let ba: f64 = directed_chamfer(b, a).iter().map(|x| x.1).sum::<f64>() / b.len() as f64;
    Ok(0.5 * (ab + ba))
}

/// `(1/|E|) Σ |l² − mean(l²)|` over squared edge lengths.
pub fn edge_loss_from_squared(squared: &[f64]) -> Result<f64> {
    if squared.is_empty() {
        return Err(argument("edge loss needs at least one edge"));
    }
    let n = squared.len() as f64;
    let mean = squared.iter().sum::<f64>() / n;
    Ok(squared.iter().map(|q| (q - mean).abs()).sum::<f64>() / n)
}

pub fn loss_edge(edges: &EdgeSet) -> Result<f64> {
    let sq: Vec<f64> = edges.lengths.iter().map(|l| l * l).collect();
    edge_loss_from_squared(&sq)
}

fn check_reprojection(pred: &Tensor, gt2d: &Tensor, views: usize) -> Result<()> {
    if pred.rank() != 2 || pred.cols() != 3 {
        return Err(argument(format!("prediction must be V x 3, got {:?}", pred.shape())));
    }
    if gt2d.shape() != [views, pred.rows(), 2] {
        return Err(argument(format!(
            "2D targets must be {views} x {} x 2, got {:?}",
            pred.rows(),
            gt2d.shape()
        )));
    }
    Ok(())
}

/// Weak-perspective projection `s·(x, y) + t` per view, L1 against `gt2d`
/// averaged over views, vertices and both image axes.
pub fn loss_reproject_2d(pred: &Tensor, gt2d: &Tensor, cams: &[CameraParams]) -> Result<f64> {
    check_reprojection(pred, gt2d, cams.len())?;
    for c in cams {
        c.validate()?;
    }
    let v = pred.rows();
    let mut total = 0.0;
    for (n, cam) in cams.iter().enumerate() {
        for i in 0..v {
            let p = pred.row(i);
            for a in 0..2 {
                let proj = cam.scale * p[a] + cam.translation[a];
                total += (proj - gt2d.data()[(n * v + i) * 2 + a]).abs();
            }
        }
    }
    Ok(total / (cams.len() * v * 2) as f64)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn l1_mesh(tape: &mut Tape, pred: Var, gt: Tensor) -> Result<Var> {
    let value = loss_l1_mesh(tape.value(pred), &gt)?;
    let n = gt.len() as f64;
    Ok(tape.custom(
        "loss_mesh",
        &[pred],
        Tensor::scalar(value),
        Box::new(move |c| {
            let s = c.grad.data()[0] / n;
            vec![Some(c.inputs[0].zip_map(&gt, |p, g| s * sign(p - g)).expect("checked"))]
        }),
    ))
}

pub fn mse(tape: &mut Tape, pred: Var, gt: Tensor) -> Result<Var> {
    let value = loss_mse(tape.value(pred), &gt)?;
    let v = gt.rows() as f64;
    Ok(tape.custom(
        "loss_mse",
        &[pred],
        Tensor::scalar(value),
        Box::new(move |c| {
            let s = 2.0 * c.grad.data()[0] / v;
            vec![Some(c.inputs[0].zip_map(&gt, |p, g| s * (p - g)).expect("checked"))]
        }),
    ))
}

/// Chamfer distance between the predicted vertices and a fixed point set.
pub fn chamfer(tape: &mut Tape, pred: Var, target: Vec<[f64; 3]>) -> Result<Var> {
    let pts = tape.value(pred).to_points()?;
    let value = loss_chamfer(&pts, &target)?;
    Ok(tape.custom(
        "loss_chamfer",
        &[pred],
        Tensor::scalar(value),
        Box::new(move |c| {
            let pts = c.inputs[0].to_points().expect("checked");
            let (na, nb) = (pts.len() as f64, target.len() as f64);
            let s = c.grad.data()[0];
            let mut d = vec![0.0; pts.len() * 3];
            for (i, (j, _)) in directed_chamfer(&pts, &target).into_iter().enumerate() {
                for k in 0..3 {
                    d[i * 3 + k] += s * (pts[i][k] - target[j][k]) / na;
                }
            }
            for (j, (i, _)) in directed_chamfer(&target, &pts).into_iter().enumerate() {
                for k in 0..3 {
                    d[i * 3 + k] += s * (pts[i][k] - target[j][k]) / nb;
                }
            }
            vec![Some(Tensor::new(vec![pts.len(), 3], d).expect("shape"))]
        }),
    ))
}

fn squared_lengths(points: &Tensor, edges: &[(usize, usize)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(a, b)| {
            let (p, q) = (points.row(a), points.row(b));
            (0..3).map(|k| (p[k] - q[k]).powi(2)).sum()
        })
        .collect()
}

/// Edge-length regularizer on the predicted vertices.
pub fn edge(tape: &mut Tape, pred: Var, edges: Arc<Vec<(usize, usize)>>) -> Result<Var> {
    let points = tape.value(pred);
    if points.rank() != 2 || points.cols() != 3 {
        return Err(argument("edge loss needs V x 3 vertices"));
    }
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a.max(b) >= points.rows()) {
        return Err(argument(format!("edge ({a}, {b}) outside {} vertices", points.rows())));
    }
    let value = edge_loss_from_squared(&squared_lengths(points, &edges))?;
    Ok(tape.custom(
        "loss_edge",
        &[pred],
        Tensor::scalar(value),
        Box::new(move |c| {
            let p = c.inputs[0];
            let sq = squared_lengths(p, &edges);
            let n = sq.len() as f64;
            let mean = sq.iter().sum::<f64>() / n;
            let signs: Vec<f64> = sq.iter().map(|q| sign(q - mean)).collect();
            let sbar = signs.iter().sum::<f64>() / n;
            let s = c.grad.data()[0];
            let mut d = Tensor::zeros(p.shape());
            for (&(a, b), sg) in edges.iter().zip(&signs) {
                let coef = s * (sg - sbar) / n * 2.0;
                for k in 0..3 {
                    let diff = p.get2(a, k) - p.get2(b, k);
                    d.data_mut()[a * 3 + k] += coef * diff;
                    d.data_mut()[b * 3 + k] -= coef * diff;
                }
            }
            vec![Some(d)]
        }),
    ))
}

/// Reprojection loss with cameras on the tape: `scale` is `1 × N`,
/// `translation` is `1 × 2N` laid out as `(t_x, t_y)` per view.
pub fn reproject_2d(tape: &mut Tape, pred: Var, scale: Var, translation: Var, gt2d: Tensor) -> Result<Var> {
    let views = tape.shape(scale).iter().product::<usize>();
    if tape.shape(translation).iter().product::<usize>() != 2 * views {
        return Err(argument("translation must hold two values per view"));
    }
    let cams = CameraParams::from_flat(tape.value(scale).data(), tape.value(translation).data())?;
    let value = loss_reproject_2d(tape.value(pred), &gt2d, &cams)?;
    let s_shape = tape.shape(scale).to_vec();
    let t_shape = tape.shape(translation).to_vec();
    Ok(tape.custom(
        "loss_2d",
        &[pred, scale, translation],
        Tensor::scalar(value),
        Box::new(move |c| {
            let (p, sc, tr) = (c.inputs[0], c.inputs[1].data(), c.inputs[2].data());
            let v = p.rows();
            let norm = c.grad.data()[0] / (views * v * 2) as f64;
            let mut dp = Tensor::zeros(p.shape());
            let mut ds = vec![0.0; views];
            let mut dt = vec![0.0; 2 * views];
            for n in 0..views {
                for i in 0..v {
                    for a in 0..2 {
                        let x = p.get2(i, a);
                        let r = sc[n] * x + tr[2 * n + a] - gt2d.data()[(n * v + i) * 2 + a];
                        let g = norm * sign(r);
                        dp.data_mut()[i * 3 + a] += g * sc[n];
                        ds[n] += g * x;
                        dt[2 * n + a] += g;
                    }
                }
            }
            vec![
                Some(dp),
                Some(Tensor::new(s_shape.clone(), ds).expect("shape")),
                Some(Tensor::new(t_shape.clone(), dt).expect("shape")),
            ]
        }),
    ))
}

/// Fixed quantities a loss compares the prediction against.
#[derive(Clone, Debug)]
pub struct LossTarget {
    /// `2V × 3` ground-truth vertices.
    pub vertices: Tensor,
    /// `N × 2V × 2` ground-truth image coordinates.
    pub points_2d: Tensor,
    /// Template edges over the stacked vertices.
    pub edges: Arc<Vec<(usize, usize)>>,
}

/// Predicted quantities on the tape.
#[derive(Clone, Copy, Debug)]
pub struct LossInputs {
    pub vertices: Var,
    pub scale: Var,
    pub translation: Var,
}

pub trait LossTerm: Send + Sync {
    /// Key of this term in the training log.
    fn log_key(&self) -> &'static str;

    fn apply(&self, tape: &mut Tape, pred: &LossInputs, target: &LossTarget) -> Result<Var>;
}

pub struct MeshL1;
pub struct Reprojection;
pub struct EdgeLength;
pub struct MeanSquared;
pub struct Chamfer;

impl LossTerm for MeshL1 {
    fn log_key(&self) -> &'static str {
        "loss_mesh"
    }

    fn apply(&self, tape: &mut Tape, pred: &LossInputs, target: &LossTarget) -> Result<Var> {
        l1_mesh(tape, pred.vertices, target.vertices.clone())
    }
}

impl LossTerm for Reprojection {
    fn log_key(&self) -> &'static str {
        "loss_2d"
    }

    fn apply(&self, tape: &mut Tape, pred: &LossInputs, target: &LossTarget) -> Result<Var> {
        reproject_2d(tape, pred.vertices, pred.scale, pred.translation, target.points_2d.clone())
    }
}

impl LossTerm for EdgeLength {
    fn log_key(&self) -> &'static str {
        "loss_edge"
    }

    fn apply(&self, tape: &mut Tape, pred: &LossInputs, target: &LossTarget) -> Result<Var> {
        edge(tape, pred.vertices, target.edges.clone())
    }
}

impl LossTerm for MeanSquared {
    fn log_key(&self) -> &'static str {
        "loss_mse"
    }

    fn apply(&self, tape: &mut Tape, pred: &LossInputs, target: &LossTarget) -> Result<Var> {
        mse(tape, pred.vertices, target.vertices.clone())
    }
}

impl LossTerm for Chamfer {
    fn log_key(&self) -> &'static str {
        "loss_chamfer"
    }

    fn apply(&self, tape: &mut Tape, pred: &LossInputs, target: &LossTarget) -> Result<Var> {
        chamfer(tape, pred.vertices, target.vertices.to_points()?)
    }
}

pub fn loss_registry() -> Registry<dyn LossTerm> {
    Registry::<dyn LossTerm>::new()
        .with("mesh", Box::new(MeshL1))
        .with("reproj2d", Box::new(Reprojection))
        .with("edge", Box::new(EdgeLength))
        .with("mse", Box::new(MeanSquared))
        .with("chamfer", Box::new(Chamfer))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f64; 3]]) -> Tensor {
        Tensor::from_points(v)
    }

    #[test]
    fn trivial_values() {
        let a = pts(&[[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]);
        let b = a.map(|x| x + 1.0);
        assert_eq!(loss_l1_mesh(&a, &a).unwrap(), 0.0);
        assert_eq!(loss_l1_mesh(&b, &a).unwrap(), 1.0);
        let c = a.zip_map(&pts(&[[0.5, 0.0, 0.0], [0.5, 0.0, 0.0]]), |x, y| x + y).unwrap();
        assert!((loss_mse(&c, &a).unwrap() - 0.25).abs() < 1e-15);
        let d = a.zip_map(&pts(&[[0.001, 0.0, 0.0], [0.0, 0.001, 0.0]]), |x, y| x + y).unwrap();
        assert!((mpve(&d, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chamfer_single_points() {
        assert!((loss_chamfer(&[[0.0; 3]], &[[0.0, 0.0, 2.0]]).unwrap() - 4.0).abs() < 1e-15);
        assert!(loss_chamfer(&[], &[[0.0; 3]]).is_err());
    }

    #[test]
    fn edge_two_lengths() {
        let e = EdgeSet { edges: vec![(0, 1), (1, 2)], lengths: vec![1.0, 3f64.sqrt()] };
        assert!((loss_edge(&e).unwrap() - 1.0).abs() < 1e-12);
        let empty = EdgeSet { edges: vec![], lengths: vec![] };
        assert!(loss_edge(&empty).is_err());
    }

    #[test]
    fn reprojection_identity_camera() {
        let p = pts(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]);
        let gt = Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.4, 0.5]).unwrap();
        let cam = CameraParams { scale: 1.0, translation: [0.0, 0.0] };
        assert_eq!(loss_reproject_2d(&p, &gt, &[cam]).unwrap(), 0.0);
        let shifted = CameraParams { scale: 1.0, translation: [0.3, -0.1] };
        assert!((loss_reproject_2d(&p, &gt, &[shifted]).unwrap() - 0.2).abs() < 1e-12);
        let bad = CameraParams { scale: 0.0, translation: [0.0, 0.0] };
        assert!(loss_reproject_2d(&p, &gt, &[bad]).is_err());
    }

    #[test]
    fn registry_names() {
        let r = loss_registry();
        let names: Vec<_> = r.names().collect();
        for n in ["mesh", "reproj2d", "edge", "mse", "chamfer"] {
            assert!(names.contains(&n));
        }
    }
}
