//! Density fields as flat little-endian `f64` files with a text header,
//! and VTK ImageData export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::bloch::WaveVector;
use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

/// Header path belonging to a density file: `cell.bin` -> `cell.hdr`.
pub fn header_path(path: &Path) -> PathBuf {
    path.with_extension("hdr")
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn encode_density(rho: &[f64]) -> Vec<u8> {
    rho.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn format_header(grid: &VoxelGrid) -> String {
    format!("n = {}\ndtype = f64le\norder = xyz\n", grid.n())
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_header(text: &str) -> Result<VoxelGrid> {
    let mut n = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let body = line.split('#').next().unwrap_or("").trim();
        if !body.is_empty() {
            let Some((k, v)) = body.split_once('=') else {
                return Err(Error::Parse {
                    offset,
                    message: format!("expected 'key = value', found '{body}'"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "n" => {
                    n = Some(v.parse::<usize>().map_err(|_| Error::Parse {
                        offset,
                        message: format!("bad grid size '{v}'"),
                    })?)
                }
                "dtype" if v == "f64le" => {}
                "order" if v == "xyz" => {}
                "dtype" | "order" => {
                    return Err(Error::Parse {
                        offset,
                        message: format!("unsupported {k} '{v}'"),
                    })
                }
                _ => {
                    return Err(Error::Parse {
                        offset,
                        message: format!("unknown key '{k}'"),
                    })
                }
            }
        }
        offset += line.len();
    }
    let n = n.ok_or(Error::Parse {
        offset,
        message: "missing grid size 'n'".into(),
    })?;
    VoxelGrid::new(n)
}

/// Decodes a density payload. A short or long file is reported at the
/// byte where it stops matching the grid; values must lie in `[0, 1]`.
pub fn decode_density(grid: &VoxelGrid, bytes: &[u8]) -> Result<Vec<f64>> {
    let want = grid.num_elements() * 8;
    if bytes.len() != want {
        return Err(Error::Parse {
            offset: bytes.len().min(want),
            message: format!("expected {want} bytes for n = {}, found {}", grid.n(), bytes.len()),
        });
    }
    let mut rho = Vec::with_capacity(grid.num_elements());
    for (i, c) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(c.try_into().unwrap());
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parse {
                offset: 8 * i,
                message: format!("density {v} outside [0, 1]"),
            });
        }
        rho.push(v);
    }
    Ok(rho)
}

pub fn write_density(path: &Path, grid: &VoxelGrid, rho: &[f64]) -> Result<()> {
    if rho.len() != grid.num_elements() {
        return Err(Error::InvalidInput("density field does not match the grid".into()));
    }
    write_atomic(path, &encode_density(rho))?;
    write_atomic(&header_path(path), format_header(grid).as_bytes())
}

pub fn read_density(path: &Path) -> Result<(VoxelGrid, Vec<f64>)> {
    let hp = header_path(path);
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let grid = parse_header(&text)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((grid, decode_density(&grid, &bytes)?))
}

fn vti_open(s: &mut String, whole: [usize; 3], spacing: f64) {
    s.push_str("<?xml version=\"1.0\"?>\n");
    s.push_str("<VTKFile type=\"ImageData\" version=\"1.0\" byte_order=\"LittleEndian\">\n");
    let _ = writeln!(
        s,
        "  <ImageData WholeExtent=\"0 {} 0 {} 0 {}\" Origin=\"0 0 0\" Spacing=\"{spacing} {spacing} {spacing}\">",
        whole[0], whole[1], whole[2]
    );
    let _ = writeln!(s, "    <Piece Extent=\"0 {} 0 {} 0 {}\">", whole[0], whole[1], whole[2]);
}

fn vti_close(s: &mut String) {
    s.push_str("    </Piece>\n  </ImageData>\n</VTKFile>\n");
}

fn data_array(s: &mut String, name: &str, components: usize, values: impl Iterator<Item = f64>) {
    let _ = writeln!(
        s,
        "        <DataArray type=\"Float64\" Name=\"{name}\" NumberOfComponents=\"{components}\" format=\"ascii\">"
    );
    s.push_str("         ");
    for v in values {
        let _ = write!(s, " {v:e}");
    }
    s.push_str("\n        </DataArray>\n");
}

/// Cell-centred scalar fields on the unit cell.
pub fn vti_cells(grid: &VoxelGrid, fields: &[(&str, &[f64])]) -> Result<String> {
    for (name, f) in fields {
        if f.len() != grid.num_elements() {
            return Err(Error::InvalidInput(format!("field '{name}' does not match the grid")));
        }
    }
    let n = grid.n();
    let mut s = String::new();
    vti_open(&mut s, [n; 3], grid.h());
    let scalars = fields.first().map(|f| f.0).unwrap_or("");
    let _ = writeln!(s, "      <CellData Scalars=\"{scalars}\">");
    for (name, f) in fields {
        data_array(&mut s, name, 1, f.iter().cloned());
    }
    s.push_str("      </CellData>\n");
    vti_close(&mut s);
    Ok(s)
}

/// A complex Bloch mode on the `(n+1)^3` cell corners. Image nodes on the
/// far faces carry the Bloch phase, so the field is continuous across
/// neighbouring cells. Real and imaginary parts are separate arrays,
/// together with the cell densities.
pub fn vti_mode(grid: &VoxelGrid, rho: &[f64], k: &WaveVector, mode: &[Complex64]) -> Result<String> {
    let n = grid.n();
    if mode.len() != grid.num_dofs() || rho.len() != grid.num_elements() {
        return Err(Error::InvalidInput("mode or density does not match the grid".into()));
    }
    let mut re = Vec::with_capacity(3 * (n + 1).pow(3));
    let mut im = Vec::with_capacity(3 * (n + 1).pow(3));
    for kz in 0..=n {
        for jy in 0..=n {
            for ix in 0..=n {
                let node = (ix % n) + n * ((jy % n) + n * (kz % n));
                let wrap = [ix / n, jy / n, kz / n];
                let arg: f64 = (0..3).map(|a| k.0[a] * wrap[a] as f64).sum();
                let ph = Complex64::from_polar(1.0, arg);
                for c in 0..3 {
                    let v = mode[3 * node + c] * ph;
                    re.push(v.re);
                    im.push(v.im);
                }
            }
        }
    }
    let mut s = String::new();
    vti_open(&mut s, [n; 3], grid.h());
    s.push_str("      <PointData Vectors=\"mode_real\">\n");
    data_array(&mut s, "mode_real", 3, re.into_iter());
    data_array(&mut s, "mode_imag", 3, im.into_iter());
    s.push_str("      </PointData>\n      <CellData Scalars=\"density\">\n");
    data_array(&mut s, "density", 1, rho.iter().cloned());
    s.push_str("      </CellData>\n");
    vti_close(&mut s);
    Ok(s)
}

/// Six significant digits.
pub fn fmt6(v: f64) -> String {
    format!("{v:.5e}")
}
