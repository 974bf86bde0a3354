//! Row-parallel execution with a capped worker count.
//!
//! Workers write disjoint row chunks of a preallocated buffer, so results are
//! bitwise identical for any thread count. The cap comes from the
//! `HEIGHTLAB_THREADS` environment variable (default: available parallelism).

use std::num::NonZeroUsize;

/// Worker cap from `HEIGHTLAB_THREADS`, clamped to [1, 256].
pub fn thread_cap() -> usize {
    let available = std::thread::available_parallelism()
        .map(NonZeroUsize::get)
        .unwrap_or(1);
    match std::env::var("HEIGHTLAB_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n.min(256),
            _ => available,
        },
        Err(_) => available,
    }
}

/// Split `buf` into per-row chunks of `row_len` and run `fill(row_index, row)`
/// over all rows, using at most [`thread_cap`] workers.
pub fn for_each_row<T, F>(buf: &mut [T], row_len: usize, fill: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    assert!(row_len > 0 && buf.len() % row_len == 0);
    let rows = buf.len() / row_len;
    let workers = thread_cap().min(rows).max(1);
    if workers == 1 {
        for (r, row) in buf.chunks_mut(row_len).enumerate() {
            fill(r, row);
        }
        return;
    }
    let rows_per_worker = rows.div_ceil(workers);
    std::thread::scope(|scope| {
        for (chunk_idx, chunk) in buf.chunks_mut(rows_per_worker * row_len).enumerate() {
            let fill = &fill;
            scope.spawn(move || {
                let base = chunk_idx * rows_per_worker;
                for (i, row) in chunk.chunks_mut(row_len).enumerate() {
                    fill(base + i, row);
                }
            });
        }
    });
}

/// Compute one owned value per row index, in parallel, preserving order.
pub fn map_rows<T, F>(rows: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let mut out: Vec<Option<T>> = (0..rows).map(|_| None).collect();
    for_each_row(&mut out, 1, |r, slot| slot[0] = Some(f(r)));
    out.into_iter().map(|v| v.expect("row filled")).collect()
}
