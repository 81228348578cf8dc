use crate::dataset::ClassMask;

/// 8-connected component labelling of one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    /// Per-pixel label, 0 for pixels outside the class, `1..=count` otherwise.
    pub labels: Vec<u32>,
    /// `areas[k]` is the pixel count of label `k + 1`.
    pub areas: Vec<u64>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.areas.len()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Labels the connected components of `class_id` pixels under 8-connectivity
/// with a two-pass union-find scan. Labels are numbered in raster order of each
/// component's first pixel.
pub fn label_components(mask: &ClassMask, class_id: u8) -> Components {
    let (w, h) = (mask.width(), mask.height());
    let vals = mask.values();
    let mut provisional = vec![0u32; w * h];
    // parent[0] is a sentinel for "no label".
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if vals[i] != class_id {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut k = 0;
            if x > 0 {
                neighbours[k] = provisional[i - 1];
                k += 1;
            }
            if y > 0 {
                let up = i - w;
                if x > 0 {
                    neighbours[k] = provisional[up - 1];
                    k += 1;
                }
                neighbours[k] = provisional[up];
                k += 1;
                if x + 1 < w {
                    neighbours[k] = provisional[up + 1];
                    k += 1;
                }
            }
            let mut label = 0u32;
            for &n in &neighbours[..k] {
                if n == 0 {
                    continue;
                }
                if label == 0 {
                    label = n;
                } else if n != label {
                    union(&mut parent, label, n);
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional[i] = label;
        }
    }

    let mut remap = vec![0u32; parent.len()];
    let mut areas = Vec::new();
    for p in provisional.iter_mut() {
        if *p == 0 {
            continue;
        }
        let root = find(&mut parent, *p);
        if remap[root as usize] == 0 {
            areas.push(0);
            remap[root as usize] = areas.len() as u32;
        }
        let l = remap[root as usize];
        areas[l as usize - 1] += 1;
        *p = l;
    }
    Components {
        width: w,
        height: h,
        labels: provisional,
        areas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, rows: &[&str]) -> ClassMask {
        let v: Vec<u8> = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| b - b'0'))
            .collect();
        ClassMask::from_vec(w, rows.len(), v).unwrap()
    }

    #[test]
    fn two_squares() {
        let m = mask(7, &["1110111", "1110111", "1110111"]);
        let c = label_components(&m, 1);
        assert_eq!(c.count(), 2);
        assert_eq!(c.areas, vec![9, 9]);
    }

    #[test]
    fn empty() {
        assert_eq!(label_components(&ClassMask::zeros(5, 5), 1).count(), 0);
    }

    #[test]
    fn diagonal_touch_joins() {
        let m = mask(3, &["100", "010", "001"]);
        let c = label_components(&m, 1);
        assert_eq!(c.count(), 1);
        assert_eq!(c.areas, vec![3]);
        let anti = mask(3, &["001", "010", "100"]);
        assert_eq!(label_components(&anti, 1).count(), 1);
    }

    #[test]
    fn u_shape_merges_late() {
        let m = mask(5, &["10001", "10001", "11111"]);
        let c = label_components(&m, 1);
        assert_eq!(c.count(), 1);
        assert_eq!(c.areas, vec![9]);
    }

    #[test]
    fn only_requested_class() {
        let m = mask(4, &["1221", "1001"]);
        let c = label_components(&m, 1);
        assert_eq!(c.count(), 2);
        let c2 = label_components(&m, 2);
        assert_eq!(c2.areas, vec![2]);
    }
}
