use rand::Rng;

/// Uniform sample of `k` items without replacement, in draw order
/// (partial Fisher–Yates over `items`).
pub(crate) fn choose<T: Copy, R: Rng + ?Sized>(rng: &mut R, items: &[T], k: usize) -> Vec<T> {
    let mut pool = items.to_vec();
    let k = k.min(pool.len());
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}
