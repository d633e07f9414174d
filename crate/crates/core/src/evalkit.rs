//! Scoring of geometry sessions and post-processing tasks from flat CSV
//! records, with the text and JSON reports built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::postproc::registry::TaskType;
use crate::validate::FailureMode;

/// Transcribed per-instance scores of the 19 benchmark tasks.
pub const TASK_SCORES_CSV: &str = include_str!("../data/task_scores.csv");
/// Per-run geometry outcomes of the benchmark cases.
pub const GEOMETRY_RUNS_CSV: &str = include_str!("../data/geometry_runs.csv");

/// Row order of task reports.
pub const TYPE_ORDER: [TaskType; 5] = [
    TaskType::ScalarExtraction,
    TaskType::Visualization,
    TaskType::GroupIdentification,
    TaskType::PhysicalDerivation,
    TaskType::GeometricDisambiguation,
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("record {row}: {message}")]
    Invalid { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    TextOnly,
    ImageText,
}

impl Modality {
    pub fn label(self) -> &'static str {
        match self {
            Self::TextOnly => "text_only",
            Self::ImageText => "image_text",
        }
    }
}

/// Agent capability grade: first-attempt correct, self-corrected, correct
/// with domain hints from the user, failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
    F,
}

impl Grade {
    pub const ALL: [Grade; 4] = [Grade::A, Grade::B, Grade::C, Grade::F];

    pub fn passes(self) -> bool {
        matches!(self, Self::A | Self::B)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryRunRecord {
    pub case: String,
    pub modality: Modality,
    pub run: u32,
    pub zero_shot_pass: bool,
    pub hitl_rounds: u32,
    /// The session hit the round cap without converging.
    pub censored: bool,
    pub failure_modes: BTreeSet<FailureMode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstanceRecord {
    pub case: String,
    pub task: String,
    pub run: u32,
    pub task_type: TaskType,
    /// Prompt clarity: 1 fully specified .. 3 under-specified.
    pub pc: u8,
    pub ac: Grade,
}

#[derive(Deserialize)]
struct GeometryRow {
    case: String,
    modality: Modality,
    run: u32,
    zero_shot_pass: bool,
    hitl_rounds: u32,
    censored: bool,
    failure_modes: String,
}

#[derive(Deserialize)]
struct TaskRow {
    case: String,
    task: String,
    run: u32,
    #[serde(rename = "type")]
    task_type: String,
    pc: u8,
    ac: Grade,
}

/// Header: `case,modality,run,zero_shot_pass,hitl_rounds,censored,failure_modes`
/// with modality `text_only|image_text` and modes separated by `;`.
pub fn read_geometry_csv(input: impl Read) -> Result<Vec<GeometryRunRecord>, EvalError> {
    let mut out = Vec::new();
    for (k, row) in csv::Reader::from_reader(input).deserialize::<GeometryRow>().enumerate() {
        let row = row?;
        let bad = |message: String| EvalError::Invalid { row: k + 1, message };
        let mut modes = BTreeSet::new();
        for m in row.failure_modes.split(';').map(str::trim).filter(|m| !m.is_empty()) {
            modes.insert(FailureMode::parse(m).ok_or_else(|| bad(format!("unknown failure mode '{m}'")))?);
        }
        if row.zero_shot_pass && !modes.is_empty() {
            return Err(bad("a zero-shot pass cannot list failure modes".into()));
        }
        out.push(GeometryRunRecord {
            case: row.case,
            modality: row.modality,
            run: row.run,
            zero_shot_pass: row.zero_shot_pass,
            hitl_rounds: row.hitl_rounds,
            censored: row.censored,
            failure_modes: modes,
        });
    }
    Ok(out)
}

/// Header: `case,task,run,type,pc,ac` with type one of scalar, visual,
/// group, phys, geodis; pc 1..3; ac one of A, B, C, F.
pub fn read_tasks_csv(input: impl Read) -> Result<Vec<TaskInstanceRecord>, EvalError> {
    let mut out = Vec::new();
    for (k, row) in csv::Reader::from_reader(input).deserialize::<TaskRow>().enumerate() {
        let row = row?;
        let bad = |message: String| EvalError::Invalid { row: k + 1, message };
        let task_type = TaskType::parse(&row.task_type).ok_or_else(|| bad(format!("unknown task type '{}'", row.task_type)))?;
        if !(1..=3).contains(&row.pc) {
            return Err(bad(format!("prompt clarity must be 1, 2 or 3, got {}", row.pc)));
        }
        out.push(TaskInstanceRecord {
            case: row.case,
            task: row.task,
            run: row.run,
            task_type,
            pc: row.pc,
            ac: row.ac,
        });
    }
    Ok(out)
}

pub fn paper_task_records() -> Vec<TaskInstanceRecord> {
    read_tasks_csv(TASK_SCORES_CSV.as_bytes()).expect("bundled task scores parse")
}

pub fn paper_geometry_records() -> Vec<GeometryRunRecord> {
    read_geometry_csv(GEOMETRY_RUNS_CSV.as_bytes()).expect("bundled geometry runs parse")
}

/// Integer percentage rounded half up.
pub fn whole_percent(num: usize, den: usize) -> u32 {
    if den == 0 {
        return 0;
    }
    ((200 * num + den) / (2 * den)) as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryCell {
    pub case: String,
    pub modality: Modality,
    pub runs: usize,
    pub zero_shot_passes: usize,
    /// Mean rounds over uncensored runs; `None` when every run is censored.
    pub mean_rounds: Option<f64>,
    pub censored: usize,
    pub cap: u32,
}

impl GeometryCell {
    pub fn pass_label(&self) -> String {
        format!("{}/{}", self.zero_shot_passes, self.runs)
    }

    /// Two decimals with trailing zeros dropped; `≥cap` when all runs are
    /// censored.
    pub fn rounds_label(&self) -> String {
        let Some(m) = self.mean_rounds else {
            return format!("≥{}", self.cap);
        };
        let mut s = format!("{m:.2}");
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
        if self.censored > 0 {
            let _ = write!(s, " (+{} ≥{})", self.censored, self.cap);
        }
        s
    }
}

/// One cell per (case, modality) present in `records`.
pub fn aggregate_geometry(records: &[GeometryRunRecord], cap: u32) -> Vec<GeometryCell> {
    let mut cells: BTreeMap<(String, Modality), Vec<&GeometryRunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.case.clone(), r.modality)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((case, modality), rs)| {
            let open: Vec<f64> = rs.iter().filter(|r| !r.censored).map(|r| r.hitl_rounds as f64).collect();
            GeometryCell {
                case,
                modality,
                runs: rs.len(),
                zero_shot_passes: rs.iter().filter(|r| r.zero_shot_pass).count(),
                mean_rounds: (!open.is_empty()).then(|| open.iter().sum::<f64>() / open.len() as f64),
                censored: rs.len() - open.len(),
                cap,
            }
        })
        .collect()
}

/// Rows per case with text-only and image+text columns; missing cells
/// print as `-`.
pub fn geometry_table(cells: &[GeometryCell]) -> String {
    let mut cases: Vec<&str> = Vec::new();
    for c in cells {
        if !cases.contains(&c.case.as_str()) {
            cases.push(&c.case);
        }
    }
    let find = |case: &str, m| cells.iter().find(|c| c.case == case && c.modality == m);
    let mut s = format!("{:<6} {:>10} {:>10} {:>10} {:>10}\n", "case", "text pass", "text hitl", "image pass", "image hitl");
    for case in cases {
        let _ = write!(s, "{case:<6}");
        for m in [Modality::TextOnly, Modality::ImageText] {
            match find(case, m) {
                Some(c) => {
                    let _ = write!(s, " {:>10} {:>10}", c.pass_label(), c.rounds_label());
                }
                None => {
                    let _ = write!(s, " {:>10} {:>10}", "-", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Failure-mode tallies per (case, modality) over zero-shot attempts.
pub fn failure_mode_counts(records: &[GeometryRunRecord]) -> BTreeMap<(String, Modality), BTreeMap<FailureMode, usize>> {
    let mut out: BTreeMap<_, BTreeMap<_, _>> = BTreeMap::new();
    for r in records {
        let e = out.entry((r.case.clone(), r.modality)).or_default();
        for m in &r.failure_modes {
            *e.entry(*m).or_insert(0) += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTypeRow {
    pub task_type: TaskType,
    /// Distinct task ids.
    pub tasks: usize,
    pub n: usize,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub f: usize,
    pub pass_percent: u32,
}

impl TaskTypeRow {
    pub fn pass_rate(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.a + self.b) as f64 / self.n as f64
        }
    }
}

/// Per task type, in [`TYPE_ORDER`]; types without records are omitted.
pub fn aggregate_tasks(records: &[TaskInstanceRecord]) -> Vec<TaskTypeRow> {
    TYPE_ORDER
        .into_iter()
        .filter_map(|t| {
            let rs: Vec<_> = records.iter().filter(|r| r.task_type == t).collect();
            if rs.is_empty() {
                return None;
            }
            let count = |g| rs.iter().filter(|r| r.ac == g).count();
            let (a, b, c, f) = (count(Grade::A), count(Grade::B), count(Grade::C), count(Grade::F));
            Some(TaskTypeRow {
                task_type: t,
                tasks: rs.iter().map(|r| r.task.as_str()).collect::<BTreeSet<_>>().len(),
                n: rs.len(),
                a,
                b,
                c,
                f,
                pass_percent: whole_percent(a + b, rs.len()),
            })
        })
        .collect()
}

pub fn task_table(rows: &[TaskTypeRow]) -> String {
    let mut s = format!("{:<8} {:>5} {:>4} {:>3} {:>3} {:>3} {:>3} {:>5}\n", "type", "tasks", "n", "A", "B", "C", "F", "pass");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>4} {:>3} {:>3} {:>3} {:>3} {:>4}%",
            r.task_type.code(),
            r.tasks,
            r.n,
            r.a,
            r.b,
            r.c,
            r.f,
            r.pass_percent
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcCell {
    pub task_type: TaskType,
    pub pc: u8,
    pub n: usize,
    pub passed: usize,
    pub pass_percent: u32,
}

/// Per (type, prompt clarity); empty cells are omitted.
pub fn stratify_by_pc(records: &[TaskInstanceRecord]) -> Vec<PcCell> {
    let mut out = Vec::new();
    for t in TYPE_ORDER {
        for pc in 1..=3u8 {
            let rs: Vec<_> = records.iter().filter(|r| r.task_type == t && r.pc == pc).collect();
            if rs.is_empty() {
                continue;
            }
            let passed = rs.iter().filter(|r| r.ac.passes()).count();
            out.push(PcCell {
                task_type: t,
                pc,
                n: rs.len(),
                passed,
                pass_percent: whole_percent(passed, rs.len()),
            });
        }
    }
    out
}

pub fn pc_table(cells: &[PcCell]) -> String {
    let mut s = format!("{:<8}", "type");
    for pc in 1..=3 {
        let _ = write!(s, " {:>6} {:>7}", format!("PC{pc} n"), format!("PC{pc} %"));
    }
    s.push('\n');
    for t in TYPE_ORDER {
        if !cells.iter().any(|c| c.task_type == t) {
            continue;
        }
        let _ = write!(s, "{:<8}", t.code());
        for pc in 1..=3 {
            match cells.iter().find(|c| c.task_type == t && c.pc == pc) {
                Some(c) => {
                    let _ = write!(s, " {:>6} {:>6}%", c.n, c.pass_percent);
                }
                None => {
                    let _ = write!(s, " {:>6} {:>7}", "-", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Machine-readable bundle of every aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub geometry: Vec<GeometryCell>,
    pub tasks: Vec<TaskTypeRow>,
    pub by_pc: Vec<PcCell>,
}

pub fn report(geometry: &[GeometryRunRecord], tasks: &[TaskInstanceRecord], cap: u32) -> EvalReport {
    EvalReport {
        geometry: aggregate_geometry(geometry, cap),
        tasks: aggregate_tasks(tasks),
        by_pc: stratify_by_pc(tasks),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row<'a>(rows: &'a [TaskTypeRow], t: TaskType) -> &'a TaskTypeRow {
        rows.iter().find(|r| r.task_type == t).unwrap()
    }

    #[test]
    fn task_matrix_reproduces_type_totals() {
        let recs = paper_task_records();
        assert_eq!(recs.len(), 57);
        let rows = aggregate_tasks(&recs);
        let got: Vec<(&str, usize, usize, usize, usize, usize, usize, u32)> = rows
            .iter()
            .map(|r| (r.task_type.code(), r.tasks, r.n, r.a, r.b, r.c, r.f, r.pass_percent))
            .collect();
        assert_eq!(
            got,
            [
                ("scalar", 4, 12, 9, 3, 0, 0, 100),
                ("visual", 4, 12, 11, 1, 0, 0, 100),
                ("group", 5, 15, 9, 2, 4, 0, 73),
                ("phys", 2, 6, 3, 0, 3, 0, 50),
                ("geodis", 4, 12, 3, 0, 9, 0, 25),
            ]
        );
        assert_eq!(rows.iter().map(|r| r.n).sum::<usize>(), recs.len());
    }

    #[test]
    fn task_matrix_reproduces_clarity_strata() {
        let cells = stratify_by_pc(&paper_task_records());
        let get = |t, pc| cells.iter().find(|c| c.task_type == t && c.pc == pc).map(|c| (c.n, c.pass_percent));
        use TaskType::*;
        assert_eq!(get(ScalarExtraction, 1), Some((4, 100)));
        assert_eq!(get(ScalarExtraction, 2), Some((6, 100)));
        assert_eq!(get(ScalarExtraction, 3), Some((2, 100)));
        assert_eq!(get(Visualization, 1), None);
        assert_eq!(get(Visualization, 2), Some((11, 100)));
        assert_eq!(get(Visualization, 3), Some((1, 100)));
        assert_eq!(get(GroupIdentification, 1), Some((1, 100)));
        assert_eq!(get(GroupIdentification, 2), Some((11, 73)));
        assert_eq!(get(GroupIdentification, 3), Some((3, 67)));
        assert_eq!(get(PhysicalDerivation, 2), Some((5, 60)));
        assert_eq!(get(PhysicalDerivation, 3), Some((1, 0)));
        assert_eq!(get(GeometricDisambiguation, 1), None);
        assert_eq!(get(GeometricDisambiguation, 2), Some((5, 60)));
        assert_eq!(get(GeometricDisambiguation, 3), Some((7, 0)));
    }

    #[test]
    fn geometry_cells() {
        let cells = aggregate_geometry(&paper_geometry_records(), 5);
        let get = |case: &str, m| {
            let c = cells.iter().find(|c| c.case == case && c.modality == m).unwrap();
            (c.pass_label(), c.rounds_label())
        };
        use Modality::*;
        assert_eq!(get("C1", ImageText), ("2/3".into(), "0.33".into()));
        assert_eq!(get("C1", TextOnly), ("0/3".into(), "1.33".into()));
        assert_eq!(get("C2", TextOnly), ("0/3".into(), "1.33".into()));
        assert_eq!(get("C2", ImageText), ("0/3".into(), "1.33".into()));
        assert_eq!(get("C3", TextOnly), ("0/3".into(), "≥5".into()));
        assert_eq!(get("C3", ImageText), ("0/3".into(), "≥5".into()));
        assert_eq!(get("C4", TextOnly), ("0/3".into(), "≥5".into()));
        assert_eq!(get("C4*", ImageText), ("0/3".into(), "4".into()));
        assert_eq!(get("C5", TextOnly), ("0/3".into(), "1.67".into()));
        assert_eq!(get("C5", ImageText), ("0/3".into(), "2.33".into()));
        assert!(!cells.iter().any(|c| c.case == "C4*" && c.modality == TextOnly));
        let table = geometry_table(&cells);
        let c4star = table.lines().find(|l| l.starts_with("C4*")).unwrap();
        assert_eq!(c4star.split_whitespace().collect::<Vec<_>>(), ["C4*", "-", "-", "0/3", "4"]);
    }

    #[test]
    fn failure_modes_tally() {
        let counts = failure_mode_counts(&paper_geometry_records());
        let c2 = &counts[&("C2".to_string(), Modality::TextOnly)];
        assert_eq!(c2.get(&FailureMode::F3), Some(&3));
        assert_eq!(c2.get(&FailureMode::F2), Some(&1));
        let c3 = &counts[&("C3".to_string(), Modality::ImageText)];
        assert_eq!(c3.get(&FailureMode::F5), Some(&2));
    }

    #[test]
    fn csv_rules() {
        let bad = "case,modality,run,zero_shot_pass,hitl_rounds,censored,failure_modes\nC1,text_only,1,true,0,false,F2\n";
        assert!(matches!(read_geometry_csv(bad.as_bytes()), Err(EvalError::Invalid { row: 1, .. })));
        let bad = "case,task,run,type,pc,ac\nC1,C1-T1,1,scalar,4,A\n";
        assert!(read_tasks_csv(bad.as_bytes()).is_err());
        let bad = "case,task,run,type,pc,ac\nC1,C1-T1,1,scalar,1,D\n";
        assert!(read_tasks_csv(bad.as_bytes()).is_err());
        assert!(aggregate_tasks(&[]).is_empty());
        assert!(stratify_by_pc(&[]).is_empty());
        let one = "case,task,run,type,pc,ac\nC9,C9-T1,1,phys,2,A\n";
        let rows = aggregate_tasks(&read_tasks_csv(one.as_bytes()).unwrap());
        assert_eq!(row(&rows, TaskType::PhysicalDerivation).pass_percent, 100);
    }

    #[test]
    fn mixed_censoring_excludes_capped_runs_from_the_mean() {
        let rec = |rounds, censored| GeometryRunRecord {
            case: "X".into(),
            modality: Modality::TextOnly,
            run: 1,
            zero_shot_pass: false,
            hitl_rounds: rounds,
            censored,
            failure_modes: BTreeSet::new(),
        };
        let cells = aggregate_geometry(&[rec(2, false), rec(5, true), rec(3, false)], 5);
        assert_eq!(cells[0].mean_rounds, Some(2.5));
        assert_eq!(cells[0].rounds_label(), "2.5 (+1 ≥5)");
    }

    #[test]
    fn tables_render() {
        let recs = paper_task_records();
        let t = task_table(&aggregate_tasks(&recs));
        assert!(t.lines().any(|l| l.starts_with("geodis") && l.ends_with("25%")));
        let p = pc_table(&stratify_by_pc(&recs));
        assert!(p.lines().any(|l| l.starts_with("geodis") && l.contains("60%")));
        let r = report(&paper_geometry_records(), &recs, 5);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
    }

    fn grade() -> impl Strategy<Value = Grade> {
        prop_oneof![Just(Grade::A), Just(Grade::B), Just(Grade::C), Just(Grade::F)]
    }

    proptest! {
        #[test]
        fn counts_and_rates_are_consistent(items in prop::collection::vec((0usize..5, 1u8..=3, grade()), 0..80)) {
            let recs: Vec<TaskInstanceRecord> = items.iter().enumerate().map(|(k, (t, pc, g))| TaskInstanceRecord {
                case: "C".into(),
                task: format!("T{}", k % 7),
                run: 1,
                task_type: TYPE_ORDER[*t],
                pc: *pc,
                ac: *g,
            }).collect();
            let rows = aggregate_tasks(&recs);
            prop_assert_eq!(rows.iter().map(|r| r.n).sum::<usize>(), recs.len());
            for r in &rows {
                prop_assert_eq!(r.a + r.b + r.c + r.f, r.n);
                prop_assert!((0.0..=1.0).contains(&r.pass_rate()));
                prop_assert!(r.pass_percent <= 100);
            }
            let cells = stratify_by_pc(&recs);
            prop_assert_eq!(cells.iter().map(|c| c.n).sum::<usize>(), recs.len());
            for c in &cells {
                if c.n == 1 {
                    prop_assert!(c.pass_percent == 0 || c.pass_percent == 100);
                }
            }
        }
    }
}
