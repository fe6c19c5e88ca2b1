//! Test-only oracles and fixture builders, independent of the library's
//! numeric paths.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use eigenbio::{ImageSample, Modality};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Eigenpairs of the explicitly formed 1/M covariance, descending.
pub struct OracleEigen {
    pub covariance: DMatrix<f64>,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn oracle_mean(gallery: &[ImageSample]) -> Vec<f64> {
    let p = gallery[0].pixels().len();
    let mut mean = vec![0.0; p];
    for s in gallery {
        for (m, x) in mean.iter_mut().zip(s.pixels()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= gallery.len() as f64);
    mean
}

pub fn oracle_eigen(gallery: &[ImageSample]) -> OracleEigen {
    let p = gallery[0].pixels().len();
    let m = gallery.len() as f64;
    let mean = oracle_mean(gallery);
    let mut c = DMatrix::<f64>::zeros(p, p);
    for s in gallery {
        let x: Vec<f64> = s.pixels().iter().zip(&mean).map(|(a, b)| a - b).collect();
        for i in 0..p {
            for j in 0..p {
                c[(i, j)] += x[i] * x[j] / m;
            }
        }
    }
    let eig = SymmetricEigen::new(c.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    OracleEigen {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect(),
        covariance: c,
    }
}

pub fn random_gallery(r: &mut ChaCha8Rng, m: usize, w: usize, h: usize) -> Vec<ImageSample> {
    (0..m)
        .map(|_| {
            let px: Vec<f64> = (0..w * h).map(|_| r.random::<f64>()).collect();
            ImageSample::new(w, h, px, Modality::Face, None).unwrap()
        })
        .collect()
}

pub fn loop_ncc(f: &ImageSample, g: &ImageSample) -> f64 {
    let (mut num, mut ff, mut gg) = (0.0, 0.0, 0.0);
    for i in 0..f.height() {
        for j in 0..f.width() {
            num += f.get(i, j) * g.get(i, j);
            ff += f.get(i, j) * f.get(i, j);
            gg += g.get(i, j) * g.get(i, j);
        }
    }
    num / (ff.sqrt() * gg.sqrt())
}

/// Naive counts: (genuine accepted, impostor accepted) at `t`.
pub fn count_accepts(genuine: &[f64], impostor: &[f64], t: f64) -> (usize, usize) {
    let mut g = 0;
    for &s in genuine {
        if s <= t {
            g += 1;
        }
    }
    let mut i = 0;
    for &s in impostor {
        if s <= t {
            i += 1;
        }
    }
    (g, i)
}

pub fn write_pgm(path: &Path, w: usize, h: usize, bytes: &[u8]) {
    assert_eq!(bytes.len(), w * h);
    let mut data = format!("P5\n{w} {h}\n255\n").into_bytes();
    data.extend_from_slice(bytes);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, data).unwrap();
}

/// Layout of a synthetic dataset on disk.
pub struct SyntheticDataset {
    pub root: PathBuf,
    pub subjects: Vec<String>,
    pub face_size: (usize, usize),
    pub ear_size: (usize, usize),
    /// Pixel-space (0..=255 scale divided by 255) subject centers per modality.
    pub centers: [Vec<Vec<f64>>; 2],
    /// Largest per-sample L2 offset from its subject center.
    pub max_noise: [f64; 2],
}

impl SyntheticDataset {
    pub fn face_size_arg(&self) -> String {
        format!("{}x{}", self.face_size.0, self.face_size.1)
    }

    pub fn ear_size_arg(&self) -> String {
        format!("{}x{}", self.ear_size.0, self.ear_size.1)
    }

    pub fn sample_path(&self, subject: &str, modality: &str, i: usize) -> PathBuf {
        self.root.join(subject).join(modality).join(format!("{i:02}.pgm"))
    }

    /// Smallest L2 distance between two subject centers.
    pub fn min_separation(&self, m: usize) -> f64 {
        let c = &self.centers[m];
        let mut best = f64::INFINITY;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let d: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                best = best.min(d);
            }
        }
        best
    }
}

/// Writes `subjects` × `per_subject` PGM samples per modality. Each subject
/// has a random center in [0.2, 0.8]; samples add uniform noise of ±`noise`.
/// `blend` optionally makes subject `blend.0` the midpoint of subjects
/// `blend.1` and `blend.2`, giving an ambiguous identity.
pub fn synthetic_dataset(
    root: &Path,
    subjects: usize,
    per_subject: usize,
    noise: f64,
    seed: u64,
    blend: Option<(usize, usize, usize)>,
) -> SyntheticDataset {
    let mut r = rng(seed);
    let face_size = (8, 10);
    let ear_size = (6, 8);
    let names: Vec<String> = (0..subjects).map(|i| format!("s{i:02}")).collect();
    let mut centers: [Vec<Vec<f64>>; 2] = Default::default();
    let mut max_noise = [0.0f64; 2];
    for (mi, (modality, (w, h))) in [("face", face_size), ("ear", ear_size)].into_iter().enumerate() {
        let mut cs: Vec<Vec<f64>> = (0..subjects)
            .map(|_| (0..w * h).map(|_| r.random_range(0.2..0.8)).collect())
            .collect();
        if let Some((t, a, b)) = blend {
            cs[t] = cs[a].iter().zip(&cs[b]).map(|(x, y)| 0.5 * (x + y)).collect();
        }
        for (si, name) in names.iter().enumerate() {
            for i in 0..per_subject {
                let bytes: Vec<u8> = cs[si]
                    .iter()
                    .map(|c| {
                        let v = (c + r.random_range(-noise..=noise)).clamp(0.0, 1.0);
                        (v * 255.0).round() as u8
                    })
                    .collect();
                let off: f64 = bytes
                    .iter()
                    .zip(&cs[si])
                    .map(|(&b, c)| (b as f64 / 255.0 - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                max_noise[mi] = max_noise[mi].max(off);
                write_pgm(
                    &root.join(name).join(modality).join(format!("{i:02}.pgm")),
                    w,
                    h,
                    &bytes,
                );
            }
        }
        centers[mi] = cs;
    }
    SyntheticDataset {
        root: root.to_path_buf(),
        subjects: names,
        face_size,
        ear_size,
        centers,
        max_noise,
    }
}
