//! Max-min fair bandwidth allocation by progressive filling.

/// Link capacities in bytes/s; `f64::INFINITY` means the link never
/// constrains a flow.
#[derive(Debug, Clone)]
pub(crate) struct Links {
    pub capacity: Vec<f64>,
}

/// Rate of every flow, given the links each one crosses. A flow whose path
/// has no finite link gets an infinite rate.
pub(crate) fn max_min_rates(links: &Links, paths: &[&[usize]]) -> Vec<f64> {
    let mut rates = vec![f64::INFINITY; paths.len()];
    let mut remaining = links.capacity.clone();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); remaining.len()];
    for (f, path) in paths.iter().enumerate() {
        for &l in path.iter() {
            if remaining[l].is_finite() {
                users[l].push(f);
            }
        }
    }
    let mut active: Vec<usize> = users.iter().map(Vec::len).collect();
    let mut frozen = vec![false; paths.len()];

    loop {
        let mut best: Option<(usize, f64)> = None;
        for (l, &count) in active.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let share = remaining[l].max(0.0) / count as f64;
            if best.map_or(true, |(_, s)| share < s) {
                best = Some((l, share));
            }
        }
        let Some((link, share)) = best else { break };
        for &f in &users[link] {
            if frozen[f] {
                continue;
            }
            frozen[f] = true;
            rates[f] = share;
            for &l in paths[f].iter() {
                if remaining[l].is_finite() {
                    remaining[l] -= share;
                    active[l] -= 1;
                }
            }
        }
    }
    rates
}
