//! Composite Gauss-Legendre rules.

use crate::error::{Error, Result};

/// Nodes per panel of the composite rule.
pub const PANEL_ORDER: usize = 8;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if order == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite rule with equal-width panels of [`PANEL_ORDER`] nodes.
#[derive(Clone, Debug)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PanelRule {
    /// `total_nodes` must be a positive multiple of [`PANEL_ORDER`].
    pub fn new(a: f64, b: f64, total_nodes: usize) -> Result<Self> {
        if total_nodes == 0 || !total_nodes.is_multiple_of(PANEL_ORDER) {
            return Err(Error::config(format!(
                "quadrature grid size {total_nodes} must be a positive multiple of {PANEL_ORDER}"
            )));
        }
        let panels = total_nodes / PANEL_ORDER;
        let (gx, gw) = gauss_legendre(PANEL_ORDER);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(total_nodes);
        let mut weights = Vec::with_capacity(total_nodes);
        for p in 0..panels {
            let lo = a + h * p as f64;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(lo + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Single-panel Gauss-Legendre integral of `f` over `[a, b]`.
pub fn integrate_panel(
    a: f64,
    b: f64,
    gx: &[f64],
    gw: &[f64],
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gx.iter()
        .zip(gw)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}
