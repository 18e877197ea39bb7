//! One function per subcommand. Each returns a `Report`; rendering and
//! output routing live in `report`.

use crate::config::{KernelSpec, RunConfig};
use crate::report::{align_table, f6, Report};
use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};
use sfdet_core::anchors::{
    coverage_report, multi_anchor_lattice, worst_case_iou, AnchorSpec, AssignIouMode,
};
use sfdet_core::costmodel::{reduction_percent, CostBreakdown, DetectorConfig};
use sfdet_core::dota::{
    clip_annotations, parse_annotations, quad_to_obox, serialize_annotations, size_histogram,
    tile_plan, Annotation, TileWindow,
};
use sfdet_core::geom::OBox;
use sfdet_core::proposals::{
    proposals_from_csv, proposals_to_csv, roi_budget_sweep, rotated_nms, rpn_postprocess, DeltaMap,
    Proposal,
};
use sfdet_core::scoremap::ScoreMap;
use sfdet_core::tensor::{read_csv_map, read_sft_file, write_sft_file, Tensor};
use std::path::{Path, PathBuf};

/// Read every `.txt` annotation file under a directory, sorted by name.
fn load_annotation_dir(dir: &Path) -> Result<Vec<(String, Vec<Annotation>)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    for path in files {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let annos =
            parse_annotations(&text).with_context(|| format!("parsing {}", path.display()))?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("annotations")
            .to_string();
        out.push((stem, annos));
    }
    if out.is_empty() {
        bail!("no .txt annotation files in {}", dir.display());
    }
    Ok(out)
}

fn pooled_objects(files: &[(String, Vec<Annotation>)]) -> Vec<OBox> {
    files
        .iter()
        .flat_map(|(_, annos)| annos.iter().map(quad_to_obox))
        .collect()
}

pub struct CoverageArgs {
    pub annotations: PathBuf,
    pub threshold: Option<f64>,
    pub image_size: Option<usize>,
    pub compare: bool,
    pub exact_obb: bool,
}

pub fn cmd_coverage(cfg: &RunConfig, args: &CoverageArgs) -> Result<Report> {
    let threshold = args.threshold.unwrap_or(cfg.pos_threshold);
    let image_size = args.image_size.unwrap_or(cfg.image_size);
    let mode = if args.exact_obb {
        AssignIouMode::ExactObb
    } else {
        AssignIouMode::EnclosingHbb
    };
    let files = load_annotation_dir(&args.annotations)?;
    let objects = pooled_objects(&files);
    if objects.is_empty() {
        bail!(
            "no parsable annotations under {}",
            args.annotations.display()
        );
    }

    let mut specs: Vec<(&str, AnchorSpec)> = vec![("configured", cfg.anchors.clone())];
    if args.compare {
        specs = vec![
            ("original", AnchorSpec::dota_original()),
            ("adjusted", AnchorSpec::dota_adjusted()),
        ];
    }

    // The single-set CSV keeps the canonical level,matched_count,
    // matched_fraction layout; --compare prefixes a spec column.
    let mut results = Vec::new();
    let mut csv = String::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (name, spec) in &specs {
        let report = coverage_report(&objects, spec, image_size, image_size, threshold, mode)?;
        if args.compare {
            for line in report.to_csv().lines().skip(1) {
                csv.push_str(&format!("{name},{line}\n"));
            }
        } else {
            csv = report.to_csv();
        }
        for lv in &report.levels {
            rows.push(vec![
                name.to_string(),
                format!("P{}", lv.stride.log2().round() as i64),
                lv.matched_count.to_string(),
                f6(lv.matched_fraction),
            ]);
        }
        rows.push(vec![
            name.to_string(),
            "none".into(),
            report.unmatched_count.to_string(),
            f6(report.unmatched_fraction),
        ]);
        results.push(json!({"spec": name, "report": report}));
    }
    if args.compare {
        csv = format!("spec,level,matched_count,matched_fraction\n{csv}");
    }

    Ok(Report {
        command: "coverage".into(),
        config: json!({
            "annotations": args.annotations.display().to_string(),
            "pos_threshold": threshold,
            "image_size": image_size,
            "iou_mode": if args.exact_obb { "exact-obb" } else { "enclosing-hbb" },
            "anchor_specs": specs.iter().map(|(n, s)| json!({"name": n, "spec": s})).collect::<Vec<_>>(),
            "files": files.len(),
            "objects": objects.len(),
        }),
        results: Value::Array(results),
        csv,
        table: align_table(&["spec", "level", "matched", "fraction"], &rows),
    })
}

pub struct WorstcaseArgs {
    pub anchor_sizes: Vec<f64>,
    pub strides: Vec<f64>,
    pub object_sizes: Vec<f64>,
    pub threshold: Option<f64>,
}

pub fn cmd_worstcase(cfg: &RunConfig, args: &WorstcaseArgs) -> Result<Report> {
    if args.anchor_sizes.is_empty() || args.strides.is_empty() || args.object_sizes.is_empty() {
        bail!("anchor sizes, strides, and object sizes must be non-empty");
    }
    let threshold = args.threshold.unwrap_or(cfg.pos_threshold);
    let sort = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    // Sorted inputs make the table independent of argument order.
    let anchors = sort(&args.anchor_sizes);
    let strides = sort(&args.strides);
    let objects = sort(&args.object_sizes);
    for &v in anchors.iter().chain(&strides).chain(&objects) {
        if v <= 0.0 {
            bail!("sizes and strides must be > 0, got {v}");
        }
    }

    let mut cells = Vec::new();
    let mut csv = String::from("anchor_size,stride,object_size,worst_iou,below_threshold\n");
    let mut rows = Vec::new();
    for &a in &anchors {
        for &s in &strides {
            for &o in &objects {
                let iou = worst_case_iou(a, s, o);
                let below = iou < threshold;
                cells.push(json!({
                    "anchor_size": a,
                    "stride": s,
                    "object_size": o,
                    "worst_iou": iou,
                    "below_threshold": below,
                }));
                csv.push_str(&format!("{a},{s},{o},{},{below}\n", f6(iou)));
                rows.push(vec![
                    format!("{a}"),
                    format!("{s}"),
                    format!("{o}"),
                    f6(iou),
                    if below {
                        format!("< {threshold}")
                    } else {
                        String::new()
                    },
                ]);
            }
        }
    }

    Ok(Report {
        command: "worstcase".into(),
        config: json!({
            "anchor_sizes": anchors,
            "strides": strides,
            "object_sizes": objects,
            "pos_threshold": threshold,
        }),
        results: Value::Array(cells),
        csv,
        table: align_table(&["anchor", "stride", "object", "worst_iou", "flag"], &rows),
    })
}

fn load_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(sfdet_core::tensor::MAGIC) {
        return read_sft_file(path).map_err(Into::into);
    }
    let text = String::from_utf8(bytes).context("tensor file is neither SFT1 nor UTF-8 CSV")?;
    read_csv_map(&text).map_err(Into::into)
}

pub struct ProposeArgs {
    pub scores: PathBuf,
    pub deltas: PathBuf,
    pub hpf: Option<bool>,
    pub kernel: Option<KernelSpec>,
    pub k_pre: Option<usize>,
    pub k_post: Option<usize>,
    pub nms_threshold: Option<f64>,
    pub sweep: Vec<usize>,
}

pub fn cmd_propose(cfg: &RunConfig, args: &ProposeArgs) -> Result<Report> {
    let mut params = cfg.pipeline.clone();
    if let Some(hpf) = args.hpf {
        params.hpf_enabled = hpf;
    }
    if let Some(kernel) = &args.kernel {
        params.hpf_kernel = kernel.clone();
    }
    if let Some(k) = args.k_pre {
        params.k_pre = k;
    }
    if let Some(k) = args.k_post {
        params.k_post = k;
    }
    if let Some(t) = args.nms_threshold {
        params.nms_iou_threshold = t;
    }
    let pipeline = params.resolve()?;

    let scores = ScoreMap::from_tensor(&load_tensor(&args.scores)?)?;
    let deltas = DeltaMap::from_tensor(&load_tensor(&args.deltas)?)?;
    let lattice = multi_anchor_lattice(&cfg.anchors, cfg.stride, scores.height, scores.width);
    if lattice.anchors_per_location() != scores.channels {
        bail!(
            "anchor spec implies {} channels but score map has {}",
            lattice.anchors_per_location(),
            scores.channels
        );
    }

    let resolved = json!({
        "scores": args.scores.display().to_string(),
        "deltas": args.deltas.display().to_string(),
        "anchors": cfg.anchors,
        "stride": cfg.stride,
        "pipeline": params,
        "sweep": args.sweep,
    });

    if !args.sweep.is_empty() {
        let rows = roi_budget_sweep(&scores, &deltas, &lattice, &args.sweep, &pipeline)?;
        let mut csv = String::from("budget,proposal_count,mean_pairwise_iou\n");
        let mut table_rows = Vec::new();
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{}\n",
                r.budget,
                r.proposal_count,
                f6(r.mean_pairwise_iou)
            ));
            table_rows.push(vec![
                r.budget.to_string(),
                r.proposal_count.to_string(),
                f6(r.mean_pairwise_iou),
            ]);
        }
        return Ok(Report {
            command: "propose --sweep".into(),
            config: resolved,
            results: serde_json::to_value(&rows)?,
            csv,
            table: align_table(&["budget", "proposals", "mean_pairwise_iou"], &table_rows),
        });
    }

    let proposals = rpn_postprocess(&scores, &deltas, &lattice, &pipeline)?;
    Ok(proposals_report("propose", resolved, &proposals))
}

fn proposals_report(command: &str, config: Value, proposals: &[Proposal]) -> Report {
    let csv = proposals_to_csv(proposals);
    let rows: Vec<Vec<String>> = proposals
        .iter()
        .map(|p| {
            vec![
                f6(p.bbox.cx),
                f6(p.bbox.cy),
                f6(p.bbox.w),
                f6(p.bbox.h),
                f6(p.bbox.theta),
                f6(p.score),
            ]
        })
        .collect();
    Report {
        command: command.into(),
        config,
        results: serde_json::to_value(proposals).expect("proposals serialize"),
        csv,
        table: align_table(&["cx", "cy", "w", "h", "theta", "score"], &rows),
    }
}

pub struct FilterArgs {
    pub input: PathBuf,
    pub kind: String,
    pub size: usize,
    pub weights: Option<Vec<f64>>,
    pub output: PathBuf,
}

pub fn cmd_filter(args: &FilterArgs) -> Result<Report> {
    let spec = KernelSpec {
        kind: args.kind.clone(),
        size: args.size,
        weights: args.weights.clone(),
    };
    let kernel = spec.resolve()?;
    let map = ScoreMap::from_tensor(&load_tensor(&args.input)?)?;
    let out = sfdet_core::scoremap::apply_hpf(&map, &kernel)?;
    write_sft_file(&args.output, &out.to_tensor())?;
    Ok(Report {
        command: "filter".into(),
        config: json!({
            "input": args.input.display().to_string(),
            "output": args.output.display().to_string(),
            "kernel": spec,
        }),
        results: json!({
            "height": out.height,
            "width": out.width,
            "channels": out.channels,
            "written": args.output.display().to_string(),
        }),
        csv: format!(
            "height,width,channels,output\n{},{},{},{}\n",
            out.height,
            out.width,
            out.channels,
            args.output.display()
        ),
        table: format!(
            "wrote {}x{}x{} map to {}\n",
            out.height,
            out.width,
            out.channels,
            args.output.display()
        ),
    })
}

pub struct NmsArgs {
    pub input: PathBuf,
    pub threshold: Option<f64>,
}

pub fn cmd_nms(cfg: &RunConfig, args: &NmsArgs) -> Result<Report> {
    let threshold = args.threshold.unwrap_or(cfg.pipeline.nms_iou_threshold);
    if !(0.0 < threshold && threshold < 1.0) {
        bail!("nms threshold {threshold} outside (0, 1)");
    }
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let proposals = proposals_from_csv(&text)?;
    let kept = rotated_nms(&proposals, threshold);
    let config = json!({
        "input": args.input.display().to_string(),
        "iou_threshold": threshold,
        "input_count": proposals.len(),
    });
    Ok(proposals_report("nms", config, &kept))
}

const BUNDLED_MODELS: &[(&str, &str)] = &[
    (
        "oriented-rcnn",
        include_str!("../configs/oriented-rcnn.json"),
    ),
    ("lsknet-t", include_str!("../configs/lsknet-t.json")),
    ("lsknet-s", include_str!("../configs/lsknet-s.json")),
];

fn load_model(name_or_path: &str) -> Result<DetectorConfig> {
    let text = match BUNDLED_MODELS.iter().find(|(n, _)| *n == name_or_path) {
        Some((_, text)) => text.to_string(),
        None => std::fs::read_to_string(name_or_path)
            .with_context(|| format!("no bundled model or readable file named {name_or_path}"))?,
    };
    let cfg: DetectorConfig = serde_json::from_str(&text).context("parsing model config")?;
    cfg.validate()?;
    Ok(cfg)
}

pub struct FlopsArgs {
    pub model: String,
    pub hpf: bool,
}

pub fn cmd_flops(args: &FlopsArgs) -> Result<Report> {
    let model = load_model(&args.model)?;
    let baseline = model.baseline_cost()?;
    let simplified = model.simplified_cost(args.hpf)?;
    let reduction = reduction_percent(&baseline, &simplified);

    let cols = |b: &CostBreakdown| -> Vec<String> {
        vec![
            format!("{:.1}", b.backbone_gflops),
            format!("{:.1}", b.neck_gflops),
            format!("{:.1}", b.rpn_gflops),
            if b.filter_gflops > 0.0 {
                format!("{:.3}", b.filter_gflops)
            } else {
                "-".into()
            },
            format!("{:.1}", b.roi_head_gflops),
            format!("{:.1}", b.total_gflops),
        ]
    };
    let mut rows = Vec::new();
    let mut row = vec![model.name.clone()];
    row.extend(cols(&baseline));
    rows.push(row);
    let mut row = vec![format!("ours - {}", model.name)];
    row.extend(cols(&simplified));
    rows.push(row);
    let mut table = align_table(
        &[
            "model", "backbone", "neck", "rpn", "filter", "roi_head", "total",
        ],
        &rows,
    );
    table.push_str(&format!("total reduction: {reduction:.1}%\n"));

    let mut csv = String::from(
        "variant,backbone_gflops,neck_gflops,rpn_gflops,filter_gflops,roi_head_gflops,total_gflops\n",
    );
    for (variant, b) in [("baseline", &baseline), ("simplified", &simplified)] {
        csv.push_str(&format!(
            "{variant},{},{},{},{},{},{}\n",
            f6(b.backbone_gflops),
            f6(b.neck_gflops),
            f6(b.rpn_gflops),
            f6(b.filter_gflops),
            f6(b.roi_head_gflops),
            f6(b.total_gflops)
        ));
    }
    csv.push_str(&format!("reduction_percent,,,,,,{}\n", f6(reduction)));

    Ok(Report {
        command: "flops".into(),
        config: json!({"model": model, "hpf": args.hpf}),
        results: json!({
            "baseline": baseline,
            "simplified": simplified,
            "reduction_percent": reduction,
        }),
        csv,
        table,
    })
}

pub struct TileArgs {
    pub image_w: usize,
    pub image_h: usize,
    pub patch: usize,
    pub overlap: usize,
    /// Interpret `overlap` as the window step instead of the shared border.
    pub overlap_is_step: bool,
    pub annotations: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub min_area_fraction: f64,
}

pub fn cmd_tile(args: &TileArgs) -> Result<Report> {
    let overlap = if args.overlap_is_step {
        args.patch
            .checked_sub(args.overlap)
            .ok_or_else(|| anyhow!("step {} exceeds patch {}", args.overlap, args.patch))?
    } else {
        args.overlap
    };
    let windows = tile_plan(args.image_w, args.image_h, args.patch, overlap)?;

    let mut transferred = 0usize;
    let mut written_files = Vec::new();
    if let Some(dir) = &args.annotations {
        let out_dir = args
            .out_dir
            .as_ref()
            .ok_or_else(|| anyhow!("--out-dir is required with --annotations"))?;
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        for (stem, annos) in load_annotation_dir(dir)? {
            for w in &windows {
                let kept = clip_annotations(&annos, w, args.min_area_fraction);
                if kept.is_empty() {
                    continue;
                }
                transferred += kept.len();
                let name = format!("{stem}__{}_{}.txt", w.x_offset, w.y_offset);
                let path = out_dir.join(&name);
                std::fs::write(&path, serialize_annotations(&kept))
                    .with_context(|| format!("writing {}", path.display()))?;
                written_files.push(name);
            }
        }
    }

    let mut csv = String::from("x_offset,y_offset,width,height\n");
    let mut rows = Vec::new();
    for w in &windows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            w.x_offset, w.y_offset, w.width, w.height
        ));
        rows.push(vec![
            w.x_offset.to_string(),
            w.y_offset.to_string(),
            w.width.to_string(),
            w.height.to_string(),
        ]);
    }
    let windows_json: Vec<&TileWindow> = windows.iter().collect();

    Ok(Report {
        command: "tile".into(),
        config: json!({
            "image_w": args.image_w,
            "image_h": args.image_h,
            "patch": args.patch,
            "overlap": overlap,
            "overlap_is_step": args.overlap_is_step,
            "min_area_fraction": args.min_area_fraction,
            "annotations": args.annotations.as_ref().map(|p| p.display().to_string()),
            "out_dir": args.out_dir.as_ref().map(|p| p.display().to_string()),
        }),
        results: json!({
            "windows": windows_json,
            "window_count": windows.len(),
            "transferred_annotations": transferred,
            "written_files": written_files,
        }),
        csv,
        table: align_table(&["x_offset", "y_offset", "width", "height"], &rows),
    })
}

pub struct StatsArgs {
    pub annotations: PathBuf,
    pub bin_edges: Vec<f64>,
}

pub fn cmd_stats(args: &StatsArgs) -> Result<Report> {
    if args.bin_edges.len() < 2 {
        bail!("need at least two bin edges");
    }
    for w in args.bin_edges.windows(2) {
        if w[1] <= w[0] {
            bail!("bin edges must be strictly ascending");
        }
    }
    let files = load_annotation_dir(&args.annotations)?;
    let annos: Vec<Annotation> = files.iter().flat_map(|(_, a)| a.clone()).collect();
    let counts = size_histogram(&annos, &args.bin_edges);

    let mut csv = String::from("bin_lo,bin_hi,count\n");
    let mut rows = Vec::new();
    let mut bins = Vec::new();
    for (b, &count) in counts.iter().enumerate() {
        let (lo, hi) = (args.bin_edges[b], args.bin_edges[b + 1]);
        csv.push_str(&format!("{lo},{hi},{count}\n"));
        rows.push(vec![format!("{lo}"), format!("{hi}"), count.to_string()]);
        bins.push(json!({"lo": lo, "hi": hi, "count": count}));
    }

    Ok(Report {
        command: "stats".into(),
        config: json!({
            "annotations": args.annotations.display().to_string(),
            "bin_edges": args.bin_edges,
            "files": files.len(),
        }),
        results: json!({
            "total_annotations": annos.len(),
            "bins": bins,
        }),
        csv,
        table: align_table(&["bin_lo", "bin_hi", "count"], &rows),
    })
}
