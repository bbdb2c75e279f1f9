//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these run on the rayon global pool.
//! Without it they are plain iterator loops. Either way the output order is
//! the input order, and every reduction in the crate goes through
//! [`pairwise_sum`] over an ordered buffer, so results are bit-identical
//! regardless of worker count.

/// True when the crate was built with rayon support.
#[inline]
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_slice<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    data.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    data.iter().map(f).collect()
}

/// Fill `out[i] = f(i)` in place.
#[cfg(feature = "parallel")]
pub fn fill_indexed<U, F>(out: &mut [U], f: F)
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

#[cfg(not(feature = "parallel"))]
pub fn fill_indexed<U, F>(out: &mut [U], f: F)
where
    F: Fn(usize) -> U,
{
    out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

/// Process disjoint chunks of `out` in parallel; `f` gets the chunk index.
#[cfg(feature = "parallel")]
pub fn for_each_chunk<U, F>(out: &mut [U], chunk: usize, f: F)
where
    U: Send,
    F: Fn(usize, &mut [U]) + Sync + Send,
{
    use rayon::prelude::*;
    out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk<U, F>(out: &mut [U], chunk: usize, f: F)
where
    F: Fn(usize, &mut [U]),
{
    out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Element-wise pairwise sum of equally sized rows, `rows[i][k]` summed over `i`.
pub fn pairwise_sum_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    match rows.len() {
        0 => Vec::new(),
        1 => rows[0].clone(),
        _ => {
            let mid = rows.len() / 2;
            let mut a = pairwise_sum_rows(&rows[..mid]);
            let b = pairwise_sum_rows(&rows[mid..]);
            for (x, y) in a.iter_mut().zip(&b) {
                *x += y;
            }
            a
        }
    }
}
