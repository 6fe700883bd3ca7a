//! Deterministic SVG rendering of a labeled instance.

use regionflow::{Assignment, Instance, Seeds};
use std::fmt::Write;

/// Region fill colors, cycled when `p` exceeds the palette.
const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
];

const CELL: f64 = 48.0;
const MARGIN: f64 = 12.0;

/// Renders one square cell per area at its coordinate, filled by region,
/// with root areas outlined heavily. Requires instance coordinates.
pub fn render(
    instance: &Instance,
    assignment: &Assignment,
    seeds: &Seeds,
) -> Result<String, String> {
    let coords = instance
        .coordinates()
        .ok_or_else(|| "instance has no coordinates to draw".to_string())?;
    let min_x = coords.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let min_y = coords.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let max_x = coords.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let max_y = coords.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let width = (max_x - min_x + 1.0) * CELL + 2.0 * MARGIN;
    let height = (max_y - min_y + 1.0) * CELL + 2.0 * MARGIN;
    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">"
    )
    .unwrap();
    writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>"
    )
    .unwrap();
    for area in 0..instance.num_areas() {
        let (cx, cy) = coords[area];
        let x = (cx - min_x) * CELL + MARGIN;
        let y = (cy - min_y) * CELL + MARGIN;
        let region = assignment.label(area);
        let fill = PALETTE[region % PALETTE.len()];
        let is_root = seeds.region_of_root(area).is_some();
        let (stroke, stroke_width) = if is_root { ("#000000", 3.5) } else { ("#333333", 1.0) };
        writeln!(
            out,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" \
             stroke=\"{stroke}\" stroke-width=\"{stroke_width}\"/>"
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"14\" \
             fill=\"#ffffff\" text-anchor=\"middle\">{name}</text>",
            tx = x + CELL / 2.0,
            ty = y + CELL / 2.0 + 5.0,
            name = escape(instance.name(area)),
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use regionflow::fixtures;

    #[test]
    fn renders_one_cell_per_area_with_roots_outlined() {
        let inst = fixtures::three_by_three();
        let svg = render(&inst, &fixtures::connected_labels(), &fixtures::roots()).unwrap();
        assert_eq!(svg.matches("<rect").count(), 10); // background + 9 cells
        assert_eq!(svg.matches("stroke-width=\"3.5\"").count(), 3);
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg, render(&inst, &fixtures::connected_labels(), &fixtures::roots()).unwrap());
    }

    #[test]
    fn refuses_without_coordinates() {
        let inst = Instance::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0], vec![1.0]],
            None,
            &[(0, 1)],
            1,
            regionflow::Metric::L2,
        )
        .unwrap();
        let seeds = Seeds::new(vec![0], 1).unwrap();
        assert!(render(&inst, &Assignment::new(vec![0, 0]), &seeds).is_err());
    }
}
