//! Episode rendering: a PNG of the per-step grid predictions plus a
//! plain-text sidecar of the trajectory.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use lookaround::completer::EpisodeTrace;
use lookaround::gridworld::{GridDims, Viewpoint};

use crate::errors::CliError;

const SEPARATOR_HEIGHT: u32 = 4;
const SEPARATOR_GRAY: Rgb<u8> = Rgb([128, 128, 128]);
const PASTE_FRAME_RED: Rgb<u8> = Rgb([255, 0, 0]);

/// Renders one episode as a vertical stack of grid predictions, top to
/// bottom in glimpse order; each grid lays its views out as elevation rows
/// by azimuth columns (agent frame). Views the model pasted from memory are
/// framed in red. Steps are divided by gray separator bands.
pub fn save_montage(trace: &EpisodeTrace, dims: GridDims, path: &Path) -> Result<(), CliError> {
    if dims.channels != 1 && dims.channels != 3 {
        return Err(CliError::Format(format!(
            "montage rendering needs 1 or 3 channels, got {}",
            dims.channels
        )));
    }
    let grid_h = (dims.n_elev * dims.view_h) as u32;
    let grid_w = (dims.m_azim * dims.view_w) as u32;
    let steps = trace.steps.len() as u32;
    let height = steps * grid_h + (steps - 1) * SEPARATOR_HEIGHT;
    let mut img = RgbImage::from_pixel(grid_w, height, SEPARATOR_GRAY);

    for (t, step) in trace.steps.iter().enumerate() {
        let y0 = t as u32 * (grid_h + SEPARATOR_HEIGHT);
        for e in 0..dims.n_elev {
            for a in 0..dims.m_azim {
                let base = dims.cell_offset(Viewpoint { elev: e, azim: a });
                for r in 0..dims.view_h {
                    for c in 0..dims.view_w {
                        let px = base + (r * dims.view_w + c) * dims.channels;
                        let rgb = if dims.channels == 1 {
                            let v = byte(step.prediction[px]);
                            [v, v, v]
                        } else {
                            [
                                byte(step.prediction[px]),
                                byte(step.prediction[px + 1]),
                                byte(step.prediction[px + 2]),
                            ]
                        };
                        img.put_pixel(
                            (a * dims.view_w + c) as u32,
                            y0 + (e * dims.view_h + r) as u32,
                            Rgb(rgb),
                        );
                    }
                }
            }
        }
        for e in 0..dims.n_elev {
            for a in 0..dims.m_azim {
                if step.pasted_cells[dims.cell_index(Viewpoint { elev: e, azim: a })] {
                    frame_cell(&mut img, dims, y0, e, a);
                }
            }
        }
    }
    img.save(path)?;
    Ok(())
}

fn byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Draws a one-pixel red border around the view at grid cell `(e, a)`.
fn frame_cell(img: &mut RgbImage, dims: GridDims, y0: u32, e: usize, a: usize) {
    let x0 = (a * dims.view_w) as u32;
    let y0 = y0 + (e * dims.view_h) as u32;
    let w = dims.view_w as u32;
    let h = dims.view_h as u32;
    for x in x0..x0 + w {
        img.put_pixel(x, y0, PASTE_FRAME_RED);
        img.put_pixel(x, y0 + h - 1, PASTE_FRAME_RED);
    }
    for y in y0..y0 + h {
        img.put_pixel(x0, y, PASTE_FRAME_RED);
        img.put_pixel(x0 + w - 1, y, PASTE_FRAME_RED);
    }
}

/// The montage's companion text: one line per glimpse with the world-frame
/// viewpoint, the agent-frame cell, the reconstruction error after that
/// glimpse, and (except on the last step) the chosen action with its
/// log-probability.
pub fn sidecar(trace: &EpisodeTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "start {}", trace.start);
    for (t, step) in trace.steps.iter().enumerate() {
        let _ = write!(
            out,
            "step {}  view {}  agent {}  loss {:.6}",
            t + 1,
            step.viewpoint,
            step.agent_cell,
            step.loss
        );
        if let Some(act) = &step.action {
            let _ = write!(out, "  action {}", act.action);
            if let Some(lp) = act.log_prob {
                let _ = write!(out, "  log_prob {:.4}", trace.tape.value(lp)[0]);
            }
        }
        out.push('\n');
    }
    out
}
