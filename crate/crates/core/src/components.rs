//! 8-connected component labelling on small boolean grids.

/// Returns the 8-connected components of the set cells of a `width × height`
/// row-major grid. Components are ordered by their first cell in raster order
/// and each component's cells are listed in raster order.
pub fn components_8(width: usize, height: usize, set: &[bool]) -> Vec<Vec<(usize, usize)>> {
    assert_eq!(set.len(), width * height);
    let mut label = vec![u32::MAX; set.len()];
    let mut out: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut stack = Vec::new();

    for start in 0..set.len() {
        if !set[start] || label[start] != u32::MAX {
            continue;
        }
        let id = out.len() as u32;
        let mut cells = Vec::new();
        label[start] = id;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % width, idx / width);
            cells.push((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let n = ny as usize * width + nx as usize;
                    if set[n] && label[n] == u32::MAX {
                        label[n] = id;
                        stack.push(n);
                    }
                }
            }
        }
        cells.sort_unstable_by_key(|&(x, y)| (y, x));
        out.push(cells);
    }
    out
}
