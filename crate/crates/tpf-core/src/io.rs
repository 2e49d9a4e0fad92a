//! On-disk artifacts: the binary array container, network checkpoints,
//! trajectory bundles with textual sidecars, marginal datasets, plain-text
//! manifests, and metrics CSV files.
//!
//! Container layout: magic "TPF0", version u8 = 1, dtype u8 = 0 (little-
//! endian f64), ndim u8, ndim x u64 dims (little endian), then the payload
//! row-major. Files may hold several records back to back.

use crate::dataset::MarginalDataset;
use crate::error::{Error, Result};
use crate::flow::TrajectoryBundle;
use crate::linalg::Matrix;
use crate::nn::{Activation, MlpSpec, NetParams};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"TPF0";
pub const VERSION: u8 = 1;
pub const DTYPE_F64_LE: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayData {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl ArrayData {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::DimMismatch(format!(
                "array data length {} vs dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }
}

pub fn write_array(w: &mut impl Write, array: &ArrayData) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, DTYPE_F64_LE, array.dims.len() as u8])?;
    for &d in &array.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in &array.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_array(r: &mut impl Read, path: &str) -> Result<ArrayData> {
    let mut head = [0u8; 7];
    r.read_exact(&mut head)
        .map_err(|e| Error::io(path, e))?;
    if &head[0..4] != MAGIC {
        return Err(Error::Format {
            path: path.into(),
            reason: "bad magic".into(),
        });
    }
    if head[4] != VERSION {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("unsupported version {}", head[4]),
        });
    }
    if head[5] != DTYPE_F64_LE {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("unsupported dtype {}", head[5]),
        });
    }
    let ndim = head[6] as usize;
    let mut dims = Vec::with_capacity(ndim);
    let mut buf8 = [0u8; 8];
    for _ in 0..ndim {
        r.read_exact(&mut buf8).map_err(|e| Error::io(path, e))?;
        dims.push(u64::from_le_bytes(buf8) as usize);
    }
    let count: usize = dims.iter().product();
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut buf8).map_err(|e| Error::io(path, e))?;
        data.push(f64::from_le_bytes(buf8));
    }
    Ok(ArrayData { dims, data })
}

pub fn save_arrays(path: &Path, arrays: &[ArrayData]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    for a in arrays {
        write_array(&mut w, a).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_arrays(path: &Path) -> Result<Vec<ArrayData>> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|_| Error::MissingArtifact(name.clone()))?;
    let mut r = BufReader::new(file);
    let mut out = Vec::new();
    loop {
        let mut probe = [0u8; 1];
        match r.read(&mut probe) {
            Ok(0) => break,
            Ok(_) => {
                let mut rest = [0u8; 3];
                r.read_exact(&mut rest).map_err(|e| Error::io(&*name, e))?;
                let magic = [probe[0], rest[0], rest[1], rest[2]];
                if &magic != MAGIC {
                    return Err(Error::Format {
                        path: name,
                        reason: "bad magic in record".into(),
                    });
                }
                let mut chained: Box<dyn Read> = Box::new(
                    std::io::Cursor::new(magic.to_vec()).chain(&mut r),
                );
                out.push(read_array(&mut chained, &name)?);
            }
            Err(e) => return Err(Error::io(&*name, e)),
        }
    }
    if out.is_empty() {
        return Err(Error::Format {
            path: name,
            reason: "no records".into(),
        });
    }
    Ok(out)
}

pub fn save_array(path: &Path, array: &ArrayData) -> Result<()> {
    save_arrays(path, std::slice::from_ref(array))
}

pub fn load_array(path: &Path) -> Result<ArrayData> {
    let mut arrays = load_arrays(path)?;
    if arrays.len() != 1 {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("expected one record, found {}", arrays.len()),
        });
    }
    Ok(arrays.remove(0))
}

// --- checkpoints -----------------------------------------------------------

fn spec_to_header(spec: &MlpSpec) -> ArrayData {
    let fields = vec![
        spec.input_dim as f64,
        spec.output_dim as f64,
        spec.hidden_width as f64,
        spec.depth as f64,
        0.0, // activation id: gelu
        spec.residual as u8 as f64,
        spec.time_embed_dim as f64,
        spec.mu_conditioned as u8 as f64,
    ];
    ArrayData::new(vec![8], fields).unwrap()
}

fn header_to_spec(a: &ArrayData, path: &str) -> Result<MlpSpec> {
    if a.dims != [8] {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("checkpoint header dims {:?}", a.dims),
        });
    }
    let f = &a.data;
    if f[4] != 0.0 {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("unknown activation id {}", f[4]),
        });
    }
    Ok(MlpSpec {
        input_dim: f[0] as usize,
        output_dim: f[1] as usize,
        hidden_width: f[2] as usize,
        depth: f[3] as usize,
        activation: Activation::Gelu,
        residual: f[5] != 0.0,
        time_embed_dim: f[6] as usize,
        mu_conditioned: f[7] != 0.0,
    })
}

/// Checkpoint = spec header record + weight record in one container file.
pub fn save_checkpoint(path: &Path, params: &NetParams) -> Result<()> {
    let weights = ArrayData::new(vec![params.weights.len()], params.weights.clone())?;
    save_arrays(path, &[spec_to_header(&params.spec), weights])
}

pub fn load_checkpoint(path: &Path) -> Result<NetParams> {
    let name = path.display().to_string();
    let arrays = load_arrays(path)?;
    if arrays.len() != 2 {
        return Err(Error::Format {
            path: name,
            reason: format!("checkpoint needs 2 records, found {}", arrays.len()),
        });
    }
    let spec = header_to_spec(&arrays[0], &name)?;
    let weights = arrays[1].data.clone();
    if weights.len() != spec.param_count() {
        return Err(Error::Format {
            path: name,
            reason: format!(
                "weight count {} does not match spec ({})",
                weights.len(),
                spec.param_count()
            ),
        });
    }
    Ok(NetParams { spec, weights })
}

// --- bundles and datasets ---------------------------------------------------

fn sidecar_path(stem: &Path) -> std::path::PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".meta.txt");
    std::path::PathBuf::from(p)
}

fn format_f64(v: f64) -> String {
    // Round-trippable decimal form.
    format!("{v:?}")
}

/// Bundle on disk: one container with the base (m x d) and states
/// (m x K x d) records, plus a textual sidecar listing times and mu.
pub fn save_bundle(stem: &Path, bundle: &TrajectoryBundle) -> Result<()> {
    let m = bundle.n_trajectories();
    let d = bundle.dim();
    let k = bundle.times().len();
    let base = ArrayData::new(vec![m, d], bundle.base().data().to_vec())?;
    let states = ArrayData::new(vec![m, k, d], bundle.states().to_vec())?;
    save_arrays(&stem.with_extension("tpf"), &[base, states])?;
    let mut lines = vec![format!(
        "times: {}",
        bundle
            .times()
            .iter()
            .map(|t| format_f64(*t))
            .collect::<Vec<_>>()
            .join(" ")
    )];
    lines.push(match bundle.mu() {
        Some(mu) => format!("mu: {}", format_f64(mu)),
        None => "mu: none".into(),
    });
    write_manifest(&sidecar_path(stem), &lines)
}

pub fn load_bundle(stem: &Path) -> Result<TrajectoryBundle> {
    let path = stem.with_extension("tpf");
    let name = path.display().to_string();
    let arrays = load_arrays(&path)?;
    if arrays.len() != 2 || arrays[0].dims.len() != 2 || arrays[1].dims.len() != 3 {
        return Err(Error::Format {
            path: name,
            reason: "bundle needs a 2-D base and a 3-D states record".into(),
        });
    }
    let meta = read_manifest(&sidecar_path(stem))?;
    let times = parse_times(&meta, stem)?;
    let mu = parse_mu(&meta, stem)?;
    let base = Matrix::new(arrays[0].dims[0], arrays[0].dims[1], arrays[0].data.clone())?;
    TrajectoryBundle::from_parts(base, times, arrays[1].data.clone(), mu)
}

/// Dataset on disk: one container with one record per marginal cloud plus a
/// sidecar with the time grid and mu.
pub fn save_dataset(stem: &Path, ds: &MarginalDataset) -> Result<()> {
    let arrays: Vec<ArrayData> = ds
        .clouds()
        .iter()
        .map(|c| ArrayData::new(vec![c.rows(), c.cols()], c.data().to_vec()))
        .collect::<Result<_>>()?;
    save_arrays(&stem.with_extension("tpf"), &arrays)?;
    let mut lines = vec![format!(
        "times: {}",
        ds.times()
            .iter()
            .map(|t| format_f64(*t))
            .collect::<Vec<_>>()
            .join(" ")
    )];
    lines.push(match ds.mu() {
        Some(mu) => format!("mu: {}", format_f64(mu)),
        None => "mu: none".into(),
    });
    write_manifest(&sidecar_path(stem), &lines)
}

pub fn load_dataset(stem: &Path) -> Result<MarginalDataset> {
    let path = stem.with_extension("tpf");
    let arrays = load_arrays(&path)?;
    let meta = read_manifest(&sidecar_path(stem))?;
    let times = parse_times(&meta, stem)?;
    let mu = parse_mu(&meta, stem)?;
    let clouds: Vec<Matrix> = arrays
        .into_iter()
        .map(|a| {
            if a.dims.len() != 2 {
                return Err(Error::Format {
                    path: path.display().to_string(),
                    reason: "cloud record must be 2-D".into(),
                });
            }
            Matrix::new(a.dims[0], a.dims[1], a.data)
        })
        .collect::<Result<_>>()?;
    MarginalDataset::new(times, clouds, mu)
}

fn parse_times(meta: &[String], stem: &Path) -> Result<Vec<f64>> {
    let line = meta
        .iter()
        .find_map(|l| l.strip_prefix("times: "))
        .ok_or_else(|| Error::Format {
            path: sidecar_path(stem).display().to_string(),
            reason: "missing times line".into(),
        })?;
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Format {
                path: sidecar_path(stem).display().to_string(),
                reason: format!("bad time value '{tok}'"),
            })
        })
        .collect()
}

fn parse_mu(meta: &[String], stem: &Path) -> Result<Option<f64>> {
    let line = meta.iter().find_map(|l| l.strip_prefix("mu: "));
    match line {
        None | Some("none") => Ok(None),
        Some(v) => v.parse::<f64>().map(Some).map_err(|_| Error::Format {
            path: sidecar_path(stem).display().to_string(),
            reason: format!("bad mu value '{v}'"),
        }),
    }
}

// --- manifests and CSV -------------------------------------------------------

/// Plain-text manifest: one line per entry.
pub fn write_manifest(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// RFC-4180-style CSV with a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.iter().map(|h| csv_quote(h)).collect::<Vec<_>>().join(","));
    out.push_str("\r\n");
    for row in rows {
        out.push_str(&row.iter().map(|f| csv_quote(f)).collect::<Vec<_>>().join(","));
        out.push_str("\r\n");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
