//! Static SVG overlay plot of batch-mean trajectories: one polyline per
//! player in the plane of the first two state coordinates, markers labeled
//! "1", "2", "3" at quarter, half and three-quarter horizon, a filled circle
//! at the start and crosses at the targets. Output is deterministic for a
//! given batch.

use apg_core::PathBatch;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Frame {
    min: [f64; 2],
    span: [f64; 2],
}

impl Frame {
    fn map(&self, p: [f64; 2]) -> [f64; 2] {
        let usable = SIZE - 2.0 * MARGIN;
        [
            MARGIN + (p[0] - self.min[0]) / self.span[0] * usable,
            // flip the vertical axis: SVG y grows downward
            SIZE - MARGIN - (p[1] - self.min[1]) / self.span[1] * usable,
        ]
    }
}

pub fn trajectory_svg(paths: &PathBatch, targets: Option<&[f64]>) -> String {
    assert!(
        paths.state_dim >= 2,
        "trajectory plots need at least two state coordinates"
    );
    let n = paths.players;
    let d = paths.state_dim;
    let p = paths.grid.steps();
    let means = paths.mean_states();

    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    let mut consider = |x: f64, y: f64| {
        min[0] = min[0].min(x);
        min[1] = min[1].min(y);
        max[0] = max[0].max(x);
        max[1] = max[1].max(y);
    };
    for row in &means {
        for i in 0..n {
            consider(row[i * d], row[i * d + 1]);
        }
    }
    if let Some(t) = targets {
        for i in 0..n {
            consider(t[i * d], t[i * d + 1]);
        }
    }
    let pad = [
        (0.1 * (max[0] - min[0])).max(0.05),
        (0.1 * (max[1] - min[1])).max(0.05),
    ];
    let frame = Frame {
        min: [min[0] - pad[0], min[1] - pad[1]],
        span: [
            (max[0] - min[0]) + 2.0 * pad[0],
            (max[1] - min[1]) + 2.0 * pad[1],
        ],
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    for i in 0..n {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for row in &means {
            let [x, y] = frame.map([row[i * d], row[i * d + 1]]);
            points.push_str(&format!("{x:.4},{y:.4} "));
        }
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>\n",
            points.trim_end()
        ));
        // markers at quarter, half, three-quarter horizon
        for (label, frac) in [("1", 0.25), ("2", 0.5), ("3", 0.75)] {
            let l = ((frac * p as f64).round() as usize).min(p);
            let row = &means[l];
            let [x, y] = frame.map([row[i * d], row[i * d + 1]]);
            out.push_str(&format!(
                "<circle cx=\"{x:.4}\" cy=\"{y:.4}\" r=\"7\" fill=\"white\" stroke=\"{color}\"/>\n"
            ));
            out.push_str(&format!(
                "<text x=\"{x:.4}\" y=\"{:.4}\" font-size=\"9\" text-anchor=\"middle\" \
                 fill=\"{color}\">{label}</text>\n",
                y + 3.0
            ));
        }
    }

    // shared start marker
    let start = &means[0];
    let [sx, sy] = frame.map([start[0], start[1]]);
    out.push_str(&format!(
        "<circle cx=\"{sx:.4}\" cy=\"{sy:.4}\" r=\"5\" fill=\"red\"/>\n"
    ));
    // target crosses
    if let Some(t) = targets {
        for i in 0..n {
            let [x, y] = frame.map([t[i * d], t[i * d + 1]]);
            for (dx0, dy0, dx1, dy1) in [(-5.0, -5.0, 5.0, 5.0), (-5.0, 5.0, 5.0, -5.0)] {
                out.push_str(&format!(
                    "<line x1=\"{:.4}\" y1=\"{:.4}\" x2=\"{:.4}\" y2=\"{:.4}\" \
                     stroke=\"red\" stroke-width=\"1.8\"/>\n",
                    x + dx0,
                    y + dy0,
                    x + dx1,
                    y + dy1
                ));
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// CSV of the batch-mean joint state per grid node.
pub fn mean_trajectory_csv(paths: &PathBatch) -> String {
    let n = paths.players;
    let d = paths.state_dim;
    let means = paths.mean_states();
    let mut out = String::from("step,t");
    for i in 0..n {
        for c in 0..d {
            out.push_str(&format!(",mean_x_{i}_{c}"));
        }
    }
    out.push('\n');
    for (l, row) in means.iter().enumerate() {
        out.push_str(&format!("{l},{}", paths.grid.node(l)));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
