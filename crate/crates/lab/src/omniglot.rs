//! Ingest of Omniglot-layout image folders: `root/alphabet/character/*`.
//!
//! Images are read as 8-bit grayscale, resized to `side x side` and scaled
//! to [0, 1]. With rotations on, every character gives four classes (0°,
//! 90°, 180° and 270°). Characters are ordered by path and split into
//! train / validation / test with the `Split` stream of the seed.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::GrayImage;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use taml_core::rng::{SeedStreams, Stream};
use taml_core::tasks::ClassPool;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("character {0} has no readable images")]
    EmptyClass(String),
    #[error("no characters found under {0}")]
    NoCharacters(String),
    #[error("{have} characters cannot fill a split of {train} train + {val} validation + at least one test character")]
    SplitTooLarge { have: usize, train: usize, val: usize },
    #[error("{0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub path: String,
    pub reason: String,
}

/// Which characters went where. Paths are relative to the root and use `/`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub image_side: usize,
    pub rotations: bool,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub skipped: Vec<Skipped>,
}

#[derive(Clone, Debug)]
pub struct Character {
    /// `alphabet/character`.
    pub name: String,
    pub instances: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub image_side: usize,
    pub rotations: bool,
    /// In lexicographic path order.
    pub characters: Vec<Character>,
    pub skipped: Vec<Skipped>,
}

fn sorted_dirs(path: &Path) -> Result<Vec<PathBuf>, IngestError> {
    sorted_entries(path, true)
}

fn sorted_entries(path: &Path, dirs: bool) -> Result<Vec<PathBuf>, IngestError> {
    let io = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(path).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.is_dir() == dirs {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn relative(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn features(img: &GrayImage) -> Vec<f64> {
    img.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect()
}

fn load_image(path: &Path, side: u32) -> Result<GrayImage, String> {
    let img = image::open(path).map_err(|e| e.to_string())?.into_luma8();
    if img.width() == side && img.height() == side {
        Ok(img)
    } else {
        Ok(imageops::resize(&img, side, side, FilterType::Triangle))
    }
}

/// Reads every character under `root`. Files that fail to decode are
/// skipped and listed in [`Dataset::skipped`]; a character left with no
/// images is an error.
pub fn ingest(root: &Path, image_side: usize, rotations: bool) -> Result<Dataset, IngestError> {
    let side = image_side as u32;
    let mut characters = Vec::new();
    let mut skipped = Vec::new();
    for alphabet in sorted_dirs(root)? {
        for character in sorted_dirs(&alphabet)? {
            let name = relative(root, &character);
            let mut images = Vec::new();
            for file in sorted_entries(&character, false)? {
                match load_image(&file, side) {
                    Ok(img) => images.push(img),
                    Err(reason) => {
                        eprintln!("warning: skipping {}: {reason}", file.display());
                        skipped.push(Skipped {
                            path: relative(root, &file),
                            reason,
                        });
                    }
                }
            }
            if images.is_empty() {
                return Err(IngestError::EmptyClass(name));
            }
            characters.push(Character {
                name,
                instances: images.iter().map(features).collect(),
            });
            if rotations {
                let turns: [fn(&GrayImage) -> GrayImage; 3] =
                    [imageops::rotate90, imageops::rotate180, imageops::rotate270];
                let last = characters.len() - 1;
                for (k, turn) in turns.iter().enumerate() {
                    let name = format!("{}@{}", characters[last].name, 90 * (k + 1));
                    let instances = images.iter().map(|img| features(&turn(img))).collect();
                    characters.push(Character { name, instances });
                }
            }
        }
    }
    if characters.is_empty() {
        return Err(IngestError::NoCharacters(root.display().to_string()));
    }
    Ok(Dataset {
        image_side,
        rotations,
        characters,
        skipped,
    })
}

/// Class pools for one split.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: ClassPool,
    pub val: Option<ClassPool>,
    pub test: ClassPool,
    pub manifest: SplitManifest,
}

impl Dataset {
    /// Names of the source characters, one per character directory.
    fn base_names(&self) -> Vec<&str> {
        let step = if self.rotations { 4 } else { 1 };
        self.characters.iter().step_by(step).map(|c| c.name.as_str()).collect()
    }

    /// Shuffles the characters with `(Split, 0)` of `seed` and takes the
    /// first `train` for training, the next `val` for validation and the
    /// rest for testing. Rotated copies stay with their character.
    pub fn split(&self, train: usize, val: usize, seed: u64) -> Result<Split, IngestError> {
        let names = self.base_names();
        if names.len() < train + val + 1 {
            return Err(IngestError::SplitTooLarge {
                have: names.len(),
                train,
                val,
            });
        }
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.shuffle(&mut SeedStreams::new(seed).rng(Stream::Split, 0));
        let (tr, rest) = order.split_at(train);
        let (va, te) = rest.split_at(val);
        let group = if self.rotations { 4 } else { 1 };
        let pool = |idx: &[usize]| {
            let mut idx = idx.to_vec();
            idx.sort_unstable();
            let classes = idx
                .iter()
                .flat_map(|&i| (0..group).map(move |r| i * group + r))
                .map(|c| self.characters[c].instances.clone())
                .collect();
            ClassPool::new(self.image_side * self.image_side, classes).map_err(|e| IngestError::Pool(e.to_string()))
        };
        let listed = |idx: &[usize]| {
            let mut v: Vec<String> = idx.iter().map(|&i| names[i].to_string()).collect();
            v.sort();
            v
        };
        Ok(Split {
            train: pool(tr)?,
            val: if va.is_empty() { None } else { Some(pool(va)?) },
            test: pool(te)?,
            manifest: SplitManifest {
                seed,
                image_side: self.image_side,
                rotations: self.rotations,
                train: listed(tr),
                val: listed(va),
                test: listed(te),
                skipped: self.skipped.clone(),
            },
        })
    }
}
