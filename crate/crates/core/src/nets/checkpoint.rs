//! Weight checkpoints: `<stem>.bin` holds every parameter as little-endian
//! f32 in declaration order; `<stem>.shapes.txt` lists the net geometry and one
//! `name dim dim ...` line per parameter.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{NetConfig, ToyNet};
use crate::error::{MgdError, Result};

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    let s = stem.as_os_str().to_owned();
    let mut bin = s.clone();
    bin.push(".bin");
    let mut txt = s;
    txt.push(".shapes.txt");
    (bin.into(), txt.into())
}

pub fn save_checkpoint(net: &ToyNet, stem: &Path) -> Result<()> {
    let (bin, txt) = paths(stem);
    let cfg = net.config();
    let mut sidecar = format!(
        "in_channels {}\nimage_size {}\nclasses {}\n",
        cfg.in_channels, cfg.image_size, cfg.classes
    );
    let mut bytes = Vec::with_capacity(net.trainable_parameter_count() * 4);
    for p in net.params() {
        let dims: Vec<String> = p.shape.iter().map(|d| d.to_string()).collect();
        writeln!(sidecar, "{} {}", p.name, dims.join(" ")).expect("writing to a String cannot fail");
        for &v in &p.value {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(bin, bytes)?;
    fs::write(txt, sidecar)?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<ToyNet> {
    let (bin, txt) = paths(stem);
    for p in [&bin, &txt] {
        if !p.exists() {
            return Err(MgdError::MissingFile { path: p.clone() });
        }
    }
    let perr = |msg: String| MgdError::Parse { what: txt.display().to_string(), msg };
    let sidecar = fs::read_to_string(&txt)?;

    let mut geometry = [None; 3];
    let mut layers: Vec<(String, Vec<usize>)> = Vec::new();
    for line in sidecar.lines().filter(|l| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let name = parts.next().expect("non-empty line");
        let dims = parts
            .map(|d| d.parse::<usize>().map_err(|_| perr(format!("bad dimension in {line:?}"))))
            .collect::<Result<Vec<_>>>()?;
        match name {
            "in_channels" | "image_size" | "classes" => {
                let slot = ["in_channels", "image_size", "classes"].iter().position(|k| *k == name).unwrap();
                geometry[slot] = dims.first().copied();
            }
            _ => layers.push((name.to_string(), dims)),
        }
    }
    let [Some(in_channels), Some(image_size), Some(classes)] = geometry else {
        return Err(perr("missing in_channels / image_size / classes".into()));
    };
    let widths = layers
        .iter()
        .filter(|(n, _)| n.starts_with("conv") && n.ends_with(".weight"))
        .map(|(_, d)| d.first().copied().ok_or_else(|| perr("empty conv weight shape".into())))
        .collect::<Result<Vec<_>>>()?;

    let mut net = ToyNet::zeros(NetConfig { in_channels, image_size, widths, classes })?;
    let expected: Vec<(String, Vec<usize>)> = net.params().iter().map(|p| (p.name.clone(), p.shape.clone())).collect();
    if expected != layers {
        return Err(perr(format!("layer listing {layers:?} does not describe a net of this family")));
    }

    let bytes = fs::read(&bin)?;
    if bytes.len() != net.trainable_parameter_count() * 4 {
        return Err(MgdError::Parse {
            what: bin.display().to_string(),
            msg: format!("{} bytes for {} parameters", bytes.len(), net.trainable_parameter_count()),
        });
    }
    let mut values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    for p in net.params_mut() {
        p.value.iter_mut().for_each(|v| *v = values.next().expect("length checked"));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let net = ToyNet::init(NetConfig::student(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let stem = dir.path().join("ckpt/student");
        save_checkpoint(&net, &stem).unwrap();
        let loaded = load_checkpoint(&stem).unwrap();
        assert_eq!(loaded.config(), net.config());
        for (a, b) in loaded.flat_parameters().iter().zip(net.flat_parameters()) {
            assert_eq!(*a, b as f32 as f64);
        }
        let sidecar = fs::read_to_string(dir.path().join("ckpt/student.shapes.txt")).unwrap();
        assert!(sidecar.contains("conv1.weight 8 4 3 3\n"));
        assert_eq!(fs::metadata(dir.path().join("ckpt/student.bin")).unwrap().len() as usize, net.trainable_parameter_count() * 4);
    }

    #[test]
    fn missing_checkpoint_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_checkpoint(&dir.path().join("nope")), Err(MgdError::MissingFile { .. })));
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let net = ToyNet::zeros(NetConfig::student()).unwrap();
        let stem = dir.path().join("s");
        save_checkpoint(&net, &stem).unwrap();
        fs::write(dir.path().join("s.bin"), [0u8; 12]).unwrap();
        assert!(matches!(load_checkpoint(&stem), Err(MgdError::Parse { .. })));
    }
}
