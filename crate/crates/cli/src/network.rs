//! Graphviz DOT rendering of estimated correlation networks.

use nalgebra::DMatrix;

/// Entries at or below this magnitude are not drawn.
pub const EDGE_TOL: f64 = 1e-8;
/// Pen width per unit of absolute correlation.
pub const WIDTH_SCALE: f64 = 5.0;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Undirected graph with one node per variable and one edge per nonzero
/// off-diagonal correlation. Positive edges are green, negative ones red;
/// `weight` is the absolute correlation and `penwidth` scales with it.
pub fn to_dot(name: &str, variables: &[String], correlation: &DMatrix<f64>) -> String {
    let p = variables.len();
    let mut out = format!("graph {} {{\n  node [shape=circle];\n", quote(name));
    for v in variables {
        out.push_str(&format!("  {};\n", quote(v)));
    }
    for j in 0..p {
        for k in (j + 1)..p {
            let r = correlation[(j, k)];
            if r.abs() <= EDGE_TOL {
                continue;
            }
            let (sign, color) = if r > 0.0 { ("positive", "green") } else { ("negative", "red") };
            out.push_str(&format!(
                "  {} -- {} [sign={sign}, color={color}, correlation={r:.6}, weight={:.6}, penwidth={:.4}];\n",
                quote(&variables[j]),
                quote(&variables[k]),
                r.abs(),
                WIDTH_SCALE * r.abs()
            ));
        }
    }
    out.push_str("}\n");
    out
}
