use std::io::{self, Write};

use super::IterationRecord;

/// Writes `iter,objective,terminal,integral,pmp_violation,seconds`, one row per record.
pub fn write_iterations_csv<W: Write>(mut w: W, history: &[IterationRecord]) -> io::Result<()> {
    writeln!(w, "iter,objective,terminal,integral,pmp_violation,seconds")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.index,
            r.objective.total,
            r.objective.terminal,
            r.objective.integral,
            r.pmp_residual.max_violation,
            r.wall_time
        )?;
    }
    Ok(())
}
