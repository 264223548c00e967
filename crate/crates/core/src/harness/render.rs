use std::fmt::Write;

use crate::world::Scene;

const PX_PER_M: f64 = 500.0;
const PAD: f64 = 20.0;
const INSET: f64 = 160.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Top-down SVG of the scene as seen by an operator facing the table:
/// the "left" direction (+X) points left and "in front" (−Y) points down.
/// Objects are drawn bottom-up so stacked objects appear on top. The held
/// object, if any, is shown in a gripper inset to the right of the table.
pub fn render_scene(scene: &Scene) -> String {
    let t = &scene.table;
    let w = (t.max[0] - t.min[0]) * PX_PER_M;
    let h = (t.max[1] - t.min[1]) * PX_PER_M;
    let px = |x: f64| PAD + (t.max[0] - x) * PX_PER_M;
    let py = |y: f64| PAD + (t.max[1] - y) * PX_PER_M;
    let width = w + 2.0 * PAD + INSET;
    let height = h.max(INSET) + 2.0 * PAD;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{PAD:.1}" y="{PAD:.1}" width="{w:.1}" height="{h:.1}" fill="#f4efe6" stroke="#555" stroke-width="1.5"/>"##
    );

    let mut order: Vec<_> = scene.objects().iter().enumerate().collect();
    // Lowest first along the table's up direction; scene order breaks ties.
    order.sort_by(|(ia, a), (ib, b)| (a.center().z * t.up).total_cmp(&(b.center().z * t.up)).then(ia.cmp(ib)));
    for (_, o) in order {
        let c = o.center();
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="#9cc3e6" fill-opacity="0.6" stroke="#1f4e79" stroke-width="1"/>"##,
            px(c.x),
            py(c.y),
            o.radius() * PX_PER_M
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(c.x),
            py(c.y) + 4.0,
            escape(&o.id)
        );
    }

    let ix = PAD + w + PAD;
    let _ = writeln!(
        svg,
        r##"<rect x="{ix:.1}" y="{PAD:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#888" stroke-dasharray="4 3"/>"##,
        INSET - PAD,
        INSET - PAD
    );
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">gripper</text>"#, ix + 6.0, PAD + 14.0);
    if let Some(held) = scene.held() {
        let cx = ix + (INSET - PAD) / 2.0;
        let cy = PAD + (INSET - PAD) / 2.0 + 6.0;
        let r = (held.diameter / 2.0 * PX_PER_M).min((INSET - PAD) / 2.0 - 20.0);
        let _ = writeln!(
            svg,
            r##"<circle cx="{cx:.1}" cy="{cy:.1}" r="{r:.1}" fill="#f6c28b" stroke="#8a4b08" stroke-width="1"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            cy + 4.0,
            escape(&held.id)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Held, Pose6D, SceneObject, Table, Vec3};

    #[test]
    fn empty_scene_is_bounds_only() {
        let svg = render_scene(&Scene::new(Table::new([-0.5, -0.4], [0.5, 0.4])));
        assert_eq!(svg.matches("<rect").count(), 2, "table and gripper frame");
        assert_eq!(svg.matches("<circle").count(), 0);
    }

    #[test]
    fn objects_and_held_are_drawn_deterministically() {
        let scene = Scene::new(Table::new([-0.5, -0.4], [0.5, 0.4]))
            .with_object(SceneObject::new("029_plate", Pose6D::at(Vec3::zeros()), 0.26))
            .with_object(SceneObject::new(
                "011_banana",
                Pose6D::at(Vec3::new(0.24, 0.0, 0.0)),
                0.18,
            ))
            .with_held(Held {
                id: "025_mug".into(),
                diameter: 0.1,
            });
        let a = render_scene(&scene);
        assert_eq!(a, render_scene(&scene));
        assert_eq!(a.matches("<circle").count(), 3);
        assert!(a.contains(">025_mug</text>"));
        // +X (left) is drawn left of the plate.
        let x_of = |id: &str| {
            let i = a.find(&format!(">{id}<")).unwrap();
            let tag = &a[a[..i].rfind("<text").unwrap()..i];
            let x = tag.split("x=\"").nth(1).unwrap().split('"').next().unwrap();
            x.parse::<f64>().unwrap()
        };
        assert!(x_of("011_banana") < x_of("029_plate"));
    }
}
