//! Field dumps of a solution: a CSV grid and a graymap of |E|.

use std::path::Path;

use crate::error::Result;
use crate::fdfd::operator::FieldSolution;
use crate::io::{csv_bytes, gray_pixmap, sci, write_atomic};

/// Default saturation percentile of the |E| graymap.
pub const DEFAULT_SATURATION: f64 = 99.5;

/// One row per node: position, then Re/Im of E_x, E_y (averaged onto the
/// node) and H_z.
pub fn field_csv(solution: &FieldSolution) -> Result<Vec<u8>> {
    let h = solution.dx();
    let mut rows = Vec::new();
    for i in solution.i_lo..=solution.i_hi {
        for j in solution.j_lo..=solution.j_hi {
            let ex = 0.5 * (solution.ex(i, j) + solution.ex(i, j - 1));
            let ey = 0.5 * (solution.ey(i, j) + solution.ey(i - 1, j));
            let hz = solution.hz(i, j);
            rows.push(vec![
                sci(i as f64 * h),
                sci(j as f64 * h),
                sci(ex.re),
                sci(ex.im),
                sci(ey.re),
                sci(ey.im),
                sci(hz.re),
                sci(hz.im),
            ]);
        }
    }
    csv_bytes(
        &["x", "y", "ex_re", "ex_im", "ey_re", "ey_im", "hz_re", "hz_im"],
        rows,
    )
}

/// |E| on cell centres as a binary PGM, saturated at the given percentile.
pub fn field_pgm(solution: &FieldSolution, saturation: f64) -> Result<Vec<u8>> {
    let (nx, ny, values) = solution.e_magnitude();
    gray_pixmap(nx, ny, &values, saturation)
}

/// Writes `<stem>.csv` and `<stem>.pgm` into `dir`.
pub fn write_field_dump(solution: &FieldSolution, dir: &Path, stem: &str, saturation: f64) -> Result<()> {
    write_atomic(&dir.join(format!("{stem}.csv")), &field_csv(solution)?)?;
    write_atomic(&dir.join(format!("{stem}.pgm")), &field_pgm(solution, saturation)?)?;
    Ok(())
}
