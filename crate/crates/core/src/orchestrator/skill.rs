use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::postproc::registry::{descriptors, ParamKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillSection {
    pub title: String,
    pub body: String,
}

/// Reference text handed verbatim to the planner on every call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillContext {
    pub version: String,
    pub sections: Vec<SkillSection>,
}

const XML_SUBSET: &str = "\
Root <case dim=\"2|3\">. Children, each exactly once:
  <constants><gravity x y z/></constants>
  <numerics dp cs? alpha cfl hcoef/>       dp = particle spacing (m); cs omitted = 10x the ballistic speed of the fluid column
  <materials><rheology group rho0 mu n tauy m/>...</materials>   one per fluid group
  <geometry> primitives </geometry>
  <run tmax tout seed?/>
Primitives carry <origin x y z/>, <rotation x y z/> (degrees) and <size x y z/>:
  <box role=\"fluid|fixed|floating\" group massdensity? skew?>  solid block; massdensity required for floating
  <fill group skew?>                        fluid filling whatever space is left
  <wall group layers>                       boundary sheet of size x by y, wetted face is local z = 0
In 2D cases every y coordinate and size is 0 and only rotation about y is allowed.
Group ids are unique across the document.";

const BOUNDARY_RULE: &str = "\
A wall needs enough particle layers to cover the kernel support: layers >= ceil(2h/dp),
with h = hcoef * dp * sqrt(dim). For hcoef = 1.2 that is 4 layers in 2D and 5 in 3D.
Layers grow away from the fluid, along local -z of the wall.
Fluid must start at least dp/2 from any solid and within 2 dp of the wall it rests on.";

const LOCAL_FRAME_RULE: &str = "\
Each primitive is built in its own local frame and placed by rotating about x, then y, then z
(degrees) and translating to origin. A wall rotated by y = 90 has its wetted face pointing +x;
y = -90 points it to -x. Inclined channels are built flat and rotated, not sheared, unless the
section itself is a parallelogram.";

fn tool_docs() -> String {
    let mut s = String::new();
    for d in descriptors() {
        let _ = writeln!(s, "{} [{}]: {} -> {}", d.name, d.task_type.code(), d.doc, d.output);
        for p in &d.params {
            let kind = match p.kind {
                ParamKind::Number => "number",
                ParamKind::Integer => "integer",
                ParamKind::Vec3 => "[x,y,z]",
                ParamKind::Text => "text",
                ParamKind::Bool => "bool",
                ParamKind::Choice(_) => "choice",
            };
            let req = if p.required { "required" } else { "optional" };
            let units = if p.units.is_empty() { String::new() } else { format!(" ({})", p.units) };
            let _ = writeln!(s, "  {} {kind}, {req}{units}: {}", p.name, p.doc);
        }
    }
    s
}

impl SkillContext {
    pub const VERSION: &'static str = "1";

    pub fn builtin() -> Self {
        let section = |t: &str, b: String| SkillSection { title: t.into(), body: b };
        Self {
            version: Self::VERSION.into(),
            sections: vec![
                section("Case document", XML_SUBSET.into()),
                section("Boundary layers", BOUNDARY_RULE.into()),
                section("Local frames", LOCAL_FRAME_RULE.into()),
                section("Analysis tools", tool_docs()),
            ],
        }
    }

    /// The text sent to a planner.
    pub fn render(&self) -> String {
        let mut s = format!("skill context v{}\n", self.version);
        for sec in &self.sections {
            let _ = write!(s, "\n## {}\n{}\n", sec.title, sec.body.trim_end());
        }
        s
    }
}
