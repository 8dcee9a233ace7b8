//! Depth-sorted alpha-blending rasterizer, tiled and naive paths.
//!
//! The tiled path is the production renderer; the naive per-pixel loop is
//! kept as a test oracle. Both traverse splats in the same global
//! front-to-back order and share the same per-pixel shading function, so
//! their outputs are bit-identical.

use super::image::Image;
use super::math::Vec3;
use super::project::project_full;
use super::{Camera, Gaussian3D, Splat2D, ALPHA_CLAMP, TRANSMITTANCE_MIN};
use rayon::prelude::*;

pub const TILE_SIZE: usize = 16;

/// Splat with precomputed inverse covariance and pixel bounds.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub mean: [f64; 2],
    /// inverse covariance (ixx, ixy, iyy)
    pub inv: [f64; 3],
    pub alpha: f64,
    pub color: Vec3,
    pub depth: f64,
    pub gaussian_index: usize,
    pub bounds: [i64; 4],
}

pub(crate) fn prepare_splat(s: &Splat2D, bounds: [i64; 4]) -> Prepared {
    let det = s.cov2d[0] * s.cov2d[2] - s.cov2d[1] * s.cov2d[1];
    let inv = [s.cov2d[2] / det, -s.cov2d[1] / det, s.cov2d[0] / det];
    Prepared {
        mean: s.mean2d,
        inv,
        alpha: s.alpha,
        color: s.color,
        depth: s.depth,
        gaussian_index: s.gaussian_index,
        bounds,
    }
}

/// Project a scene and return splats sorted front-to-back with a
/// deterministic index tie-break.
pub(crate) fn prepare_scene(gaussians: &[Gaussian3D], cam: &Camera) -> Vec<Prepared> {
    let mut prepared: Vec<Prepared> = gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project_full(g, cam, i).map(|p| prepare_splat(&p.splat, p.bounds)))
        .collect();
    prepared.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(a.gaussian_index.cmp(&b.gaussian_index))
    });
    prepared
}

#[inline]
pub(crate) fn splat_weight(s: &Prepared, px_center: f64, py_center: f64) -> f64 {
    let dx = px_center - s.mean[0];
    let dy = py_center - s.mean[1];
    let q = s.inv[0] * dx * dx + 2.0 * s.inv[1] * dx * dy + s.inv[2] * dy * dy;
    (-0.5 * q).exp()
}

/// Blend the splats selected by `order` (indices into `prepared`, already
/// front-to-back) at one pixel.
#[inline]
fn shade_pixel(prepared: &[Prepared], order: &[usize], px: i64, py: i64, bg: &Vec3) -> [f64; 3] {
    let cx = px as f64 + 0.5;
    let cy = py as f64 + 0.5;
    let mut out = [0.0; 3];
    let mut transmittance = 1.0;
    for &i in order {
        let s = &prepared[i];
        if px < s.bounds[0] || px > s.bounds[1] || py < s.bounds[2] || py > s.bounds[3] {
            continue;
        }
        let a = (s.alpha * splat_weight(s, cx, cy)).min(ALPHA_CLAMP);
        out[0] += transmittance * a * s.color[0];
        out[1] += transmittance * a * s.color[1];
        out[2] += transmittance * a * s.color[2];
        transmittance *= 1.0 - a;
        if transmittance < TRANSMITTANCE_MIN {
            break;
        }
    }
    out[0] += transmittance * bg[0];
    out[1] += transmittance * bg[1];
    out[2] += transmittance * bg[2];
    out
}

/// Reference renderer: every pixel walks the full sorted splat list.
pub fn rasterize_naive(gaussians: &[Gaussian3D], cam: &Camera, background: &Vec3) -> Image {
    let prepared = prepare_scene(gaussians, cam);
    let order: Vec<usize> = (0..prepared.len()).collect();
    let mut img = Image::new(cam.width, cam.height);
    for py in 0..cam.height as i64 {
        for px in 0..cam.width as i64 {
            let rgb = shade_pixel(&prepared, &order, px, py, background);
            img.set_pixel(px as usize, py as usize, rgb);
        }
    }
    img
}

pub(crate) struct TileGrid {
    pub tiles_x: usize,
    /// per tile: indices into the sorted splat list, in sorted order
    pub lists: Vec<Vec<usize>>,
}

pub(crate) fn build_tile_lists(prepared: &[Prepared], width: usize, height: usize) -> TileGrid {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for (i, s) in prepared.iter().enumerate() {
        let tx0 = (s.bounds[0] as usize) / TILE_SIZE;
        let tx1 = (s.bounds[1] as usize) / TILE_SIZE;
        let ty0 = (s.bounds[2] as usize) / TILE_SIZE;
        let ty1 = (s.bounds[3] as usize) / TILE_SIZE;
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                lists[ty * tiles_x + tx].push(i);
            }
        }
    }
    TileGrid { tiles_x, lists }
}

/// Production renderer: per-tile splat lists, parallel over tiles. Output is
/// bit-identical to [`rasterize_naive`].
pub fn rasterize(gaussians: &[Gaussian3D], cam: &Camera, background: &Vec3) -> Image {
    let prepared = prepare_scene(gaussians, cam);
    let grid = build_tile_lists(&prepared, cam.width, cam.height);

    let tile_results: Vec<(usize, Vec<[f64; 3]>)> = (0..grid.lists.len())
        .into_par_iter()
        .map(|tile| {
            let tx = tile % grid.tiles_x;
            let ty = tile / grid.tiles_x;
            let x0 = tx * TILE_SIZE;
            let y0 = ty * TILE_SIZE;
            let x1 = (x0 + TILE_SIZE).min(cam.width);
            let y1 = (y0 + TILE_SIZE).min(cam.height);
            let mut pixels = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for py in y0..y1 {
                for px in x0..x1 {
                    pixels.push(shade_pixel(
                        &prepared,
                        &grid.lists[tile],
                        px as i64,
                        py as i64,
                        background,
                    ));
                }
            }
            (tile, pixels)
        })
        .collect();

    let mut img = Image::new(cam.width, cam.height);
    for (tile, pixels) in tile_results {
        let tx = tile % grid.tiles_x;
        let ty = tile / grid.tiles_x;
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        let x1 = (x0 + TILE_SIZE).min(cam.width);
        let mut it = pixels.into_iter();
        for py in y0..(y0 + TILE_SIZE).min(cam.height) {
            for px in x0..x1 {
                img.set_pixel(px, py, it.next().expect("tile pixel count"));
            }
        }
    }
    img
}

/// One image per frame; `cams` may hold a single shared camera or one per frame.
pub fn render_video(frames: &[Vec<Gaussian3D>], cams: &[Camera], background: &Vec3) -> Vec<Image> {
    frames
        .iter()
        .enumerate()
        .map(|(i, scene)| {
            let cam = if cams.len() == 1 { &cams[0] } else { &cams[i] };
            rasterize(scene, cam, background)
        })
        .collect()
}
