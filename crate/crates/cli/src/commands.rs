use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use inbetween_core::dcmoe::{
    self, build_dataset, fit_normalizers, prepare_clip, rollout, train_in_place, Guidance,
    ModelParameters, RolloutStart, TargetPose, MIN_TTA,
};
use inbetween_core::gallery::{self, candidates, chain_guidance, GalleryIndex, Query};
use inbetween_core::metrics::{
    interpolate_baseline, EvalAccumulator, EvalReport, PoseFrame, TRANSITION_LENGTHS,
};
use inbetween_core::motion::cache::{self, CachedClip};
use inbetween_core::motion::{
    parse_bvh, synthetic_corpus, write_bvh, FootConfig, MotionClip, STYLE_NAMES,
};
use inbetween_core::rotmath::{ground_facing, Vec2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tracing::info;

use crate::args::*;
use crate::config::{write_echo, Paths, RunConfig};
use crate::error::{CliError, CliResult};
use crate::service::{self, Marker, QueryRequest, SessionState};

/// Frames of context a model rollout needs before its start frame.
const CONTEXT: usize = 30;

pub struct Ctx {
    pub cfg: RunConfig,
    pub paths: Paths,
}

fn ensure_parent(p: &Path) -> CliResult<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e)),
        _ => Ok(()),
    }
}

fn write_file(p: &Path, bytes: &[u8]) -> CliResult<()> {
    ensure_parent(p)?;
    std::fs::write(p, bytes).map_err(|e| CliError::io(p, e))
}

/// Attaches `path` to I/O failures from the core loaders.
fn at<T>(path: &Path, r: inbetween_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        inbetween_core::Error::Io(source) => CliError::io(path, source),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn load_clips(path: &Path) -> CliResult<Vec<CachedClip>> {
    let clips = at(path, cache::load(path))?;
    if clips.is_empty() {
        return Err(CliError::Data(format!("{}: no clips", path.display())));
    }
    Ok(clips)
}

fn derived(clips: Vec<CachedClip>) -> CliResult<Vec<MotionClip>> {
    clips
        .into_iter()
        .map(|c| {
            let mut m = c.clip;
            m.derive()?;
            Ok(m)
        })
        .collect()
}

pub fn parse_vec2(s: &str, flag: &str) -> CliResult<Vec2> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--{flag} expects `x,z`, got `{s}`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let x = parts[0].parse::<f64>().map_err(|_| bad())?;
    let z = parts[1].parse::<f64>().map_err(|_| bad())?;
    Ok(Vec2::new(x, z))
}

pub fn synth(ctx: &mut Ctx, a: &SynthArgs) -> CliResult<()> {
    let c = &mut ctx.cfg.corpus;
    if let Some(v) = a.styles {
        c.styles = v;
    }
    if let Some(v) = a.minutes {
        c.minutes = v;
    }
    if let Some(v) = a.clip_seconds {
        c.clip_seconds = v;
    }
    if let Some(v) = a.max_turn {
        c.max_turn = v;
    }
    let clips = synthetic_corpus(c)?;
    let out = ctx.paths.resolve(&a.out);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let cached: Vec<CachedClip> = clips
        .into_iter()
        .enumerate()
        .map(|(i, clip)| CachedClip {
            name: format!("{i:04}_{}", STYLE_NAMES[clip.style]),
            clip,
            stance: None,
        })
        .collect();
    cache::save(&out.join("clips.bin"), &cached)?;
    if a.bvh {
        for c in &cached {
            write_file(&out.join("bvh").join(format!("{}.bvh", c.name)), write_bvh(&c.clip).as_bytes())?;
        }
    }
    write_echo(&out, "synth", &ctx.cfg, json!({ "bvh": a.bvh }))?;
    let frames: usize = cached.iter().map(|c| c.clip.num_frames()).sum();
    info!(clips = cached.len(), frames, "corpus written");
    println!("wrote {} clips ({frames} frames) to {}", cached.len(), out.display());
    Ok(())
}

fn bvh_files(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let rd = std::fs::read_dir(p).map_err(|e| CliError::io(p, e))?;
            let mut found: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("bvh")))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Data("no BVH files found".into()));
    }
    Ok(files)
}

pub fn ingest(ctx: &mut Ctx, a: &IngestArgs) -> CliResult<()> {
    let inputs: Vec<PathBuf> = a.inputs.iter().map(|p| ctx.paths.resolve(p)).collect();
    let mut cached = Vec::new();
    for f in bvh_files(&inputs)? {
        let text = std::fs::read_to_string(&f).map_err(|e| CliError::io(&f, e))?;
        let mut clip = parse_bvh(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", f.display())))?
            .scaled(a.scale)?;
        clip.style = a.style;
        cached.push(CachedClip {
            name: f.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
            clip,
            stance: None,
        });
    }
    let out = ctx.paths.resolve(&a.out);
    ensure_parent(&out)?;
    cache::save(&out, &cached)?;
    write_echo(&out, "ingest", &ctx.cfg, json!({ "scale": a.scale, "style": a.style, "inputs": inputs }))?;
    println!("cached {} clips in {}", cached.len(), out.display());
    Ok(())
}

pub fn phases(ctx: &mut Ctx, a: &PhasesArgs) -> CliResult<()> {
    let mut clips = load_clips(&ctx.paths.resolve(&a.input))?;
    for c in &mut clips {
        c.clip.derive()?;
        c.clip.phases = Some(inbetween_core::features::extract_phase_proxy(&c.clip)?);
    }
    let out = ctx.paths.resolve(&a.out);
    ensure_parent(&out)?;
    cache::save(&out, &clips)?;
    write_echo(&out, "phases", &ctx.cfg, json!({}))?;
    println!("phases extracted for {} clips", clips.len());
    Ok(())
}

pub fn gallery_build(ctx: &mut Ctx, a: &GalleryBuildArgs) -> CliResult<()> {
    if let Some(s) = a.stride {
        ctx.cfg.gallery.stride = s;
    }
    let clips = derived(load_clips(&ctx.paths.resolve(&a.input))?)?;
    let g = GalleryIndex::build(&clips, ctx.cfg.gallery.clone())?;
    let out = ctx.paths.resolve(&a.out);
    ensure_parent(&out)?;
    gallery::io::save(&out, &g)?;
    if let Some(j) = &a.jsonl {
        let j = ctx.paths.resolve(j);
        let mut buf = Vec::new();
        gallery::io::export_jsonl(&g, &mut buf)?;
        write_file(&j, &buf)?;
    }
    write_echo(&out, "gallery build", &ctx.cfg, json!({}))?;
    println!("gallery with {} trajectories in {} bins", g.len(), g.bins.len());
    Ok(())
}

pub fn gallery_query(ctx: &mut Ctx, a: &GalleryQueryArgs) -> CliResult<()> {
    if let Some(al) = a.alpha {
        ctx.cfg.search.alpha = al;
    }
    let gp = ctx.paths.resolve(&a.gallery);
    let g = at(&gp, gallery::io::load(&gp))?;
    let req = QueryRequest {
        start: Marker {
            pos: xz(parse_vec2(&a.from, "from")?),
            facing: xz(parse_vec2(&a.from_facing, "from-facing")?),
        },
        target: Marker {
            pos: xz(parse_vec2(&a.to, "to")?),
            facing: xz(parse_vec2(&a.to_facing, "to-facing")?),
        },
        style: a.style,
        duration_label: a.duration.clone(),
    };
    let res = service::query_candidates(&g, &ctx.cfg.search, a.count, &req)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut text = String::new();
    for c in &res.candidates {
        text.push_str(&serde_json::to_string(c).expect("plain data"));
        text.push('\n');
    }
    if res.candidates.is_empty() {
        eprintln!("no match within alpha = {} rad", ctx.cfg.search.alpha);
    }
    match &a.out {
        Some(o) => {
            let o = ctx.paths.resolve(o);
            write_file(&o, text.as_bytes())?;
            write_echo(&o, "gallery query", &ctx.cfg, json!({ "request": req }))?;
            println!("{} candidates", res.candidates.len());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn xz(v: Vec2) -> [f64; 2] {
    [v.x, v.y]
}

pub fn train(ctx: &mut Ctx, a: &TrainArgs) -> CliResult<()> {
    let t = &mut ctx.cfg.training;
    if let Some(v) = a.steps {
        t.steps = Some(v);
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
        t.steps = a.steps;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(m) = a.model {
        ctx.cfg.model.preset = m;
    }
    let clips = derived(load_clips(&ctx.paths.resolve(&a.input))?)?;
    let model = ctx.cfg.model.config();
    if let Some(c) = clips.iter().find(|c| c.style >= model.n_styles) {
        return Err(CliError::Data(format!(
            "style {} outside the model's {} styles",
            c.style, model.n_styles
        )));
    }
    let cfg = ctx.cfg.training.clone();
    let ds = build_dataset(&clips, &cfg)?;
    let mut params = ModelParameters::init(&model, cfg.seed)?;
    fit_normalizers(&mut params, &ds, cfg.min_std);
    let every = a.log_every.max(1);
    info!(samples = ds.len(), steps = cfg.total_steps(ds.len()), "training");
    let report = train_in_place(&mut params, &ds, &cfg, |step, l| {
        if step % every == 0 {
            info!(step, total = l.total, recon = l.reconstruction(), consist = l.consistency(), "loss");
        }
    })?;
    let out = ctx.paths.resolve(&a.out);
    ensure_parent(&out)?;
    let echo = serde_json::to_value(&ctx.cfg).expect("plain data");
    dcmoe::io::save(&out, &params, echo)?;
    write_echo(&out, "train", &ctx.cfg, json!({ "samples": ds.len() }))?;
    println!(
        "trained {} steps on {} samples, final loss {:.6}",
        report.steps,
        ds.len(),
        report.last.total
    );
    Ok(())
}

pub fn rollout_cmd(ctx: &mut Ctx, a: &RolloutArgs) -> CliResult<()> {
    let wp = ctx.paths.resolve(&a.weights);
    let params = at(&wp, dcmoe::io::load(&wp))?;
    let clips = load_clips(&ctx.paths.resolve(&a.input))?;
    let src = clips
        .get(a.clip)
        .ok_or_else(|| CliError::Usage(format!("clip {} of {}", a.clip, clips.len())))?;
    let (clip, _) = prepare_clip(&src.clip, &FootConfig::default())?;
    let target_frame = a.target.unwrap_or(a.start + a.frames);
    if target_frame >= clip.num_frames() || target_frame <= a.start {
        return Err(CliError::Usage(format!(
            "target frame {target_frame} must follow start {} inside {} frames",
            a.start,
            clip.num_frames()
        )));
    }
    let root = |f: usize| clip.world_positions(f)[0].ground();
    let facing = |f: usize| ground_facing(clip.world_rotations(f)[0]);
    let guidance = match &a.gallery {
        None => Guidance::from_clip(&clip, a.start, target_frame)?,
        Some(gp) => {
            let gp = ctx.paths.resolve(gp);
            let g = at(&gp, gallery::io::load(&gp))?;
            let q = Query::between(root(a.start), facing(a.start), root(target_frame), facing(target_frame))?
                .with_style(Some(clip.style));
            let found = candidates(&g, &q, &ctx.cfg.search, 1, 8)?;
            let c = found
                .first()
                .ok_or_else(|| CliError::Data(format!("no match within alpha = {} rad", ctx.cfg.search.alpha)))?;
            chain_guidance(&g, &c.result, root(a.start), Some(root(target_frame)))
        }
    };
    let start = RolloutStart::from_clip(&clip, a.start)?;
    let target = TargetPose::from_clip(&clip, target_frame)?;
    let mut out_clip = rollout(&start, &target, &guidance, &params)?;
    out_clip.compute_fk();
    let last = out_clip.num_frames() - 1;
    let miss = (out_clip.world_positions(last)[0] - target.positions[0]).norm();
    let out = ctx.paths.resolve(&a.out);
    write_file(&out, write_bvh(&out_clip).as_bytes())?;
    write_echo(&out, "rollout", &ctx.cfg, json!({
        "clip": a.clip, "start": a.start, "target": target_frame, "frames": guidance.tta(),
    }))?;
    println!("{} frames, final root {:.4} m from target", out_clip.num_frames(), miss);
    Ok(())
}

pub fn eval(ctx: &mut Ctx, a: &EvalArgs) -> CliResult<()> {
    let params = match &a.weights {
        Some(w) => {
            let w = ctx.paths.resolve(w);
            Some(at(&w, dcmoe::io::load(&w))?)
        }
        None if a.method.contains(&EvalMethod::Model) => {
            return Err(CliError::Usage("--method model needs --weights".into()))
        }
        None => None,
    };
    let mut lengths = if a.frames.is_empty() { TRANSITION_LENGTHS.to_vec() } else { a.frames.clone() };
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.iter().any(|&n| n < 2) {
        return Err(CliError::Usage("transition lengths must be at least 2 frames".into()));
    }
    if a.method.contains(&EvalMethod::Model) && lengths.iter().any(|&n| n < MIN_TTA) {
        return Err(CliError::Usage(format!("model transitions need at least {MIN_TTA} frames")));
    }
    let feet = FootConfig::default();
    let clips: Vec<MotionClip> = load_clips(&ctx.paths.resolve(&a.input))?
        .iter()
        .map(|c| Ok(prepare_clip(&c.clip, &feet)?.0))
        .collect::<CliResult<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.training.seed);
    let mut rows = Vec::new();
    for &n in &lengths {
        let mut acc: Vec<EvalAccumulator> = vec![EvalAccumulator::default(); a.method.len()];
        for clip in &clips {
            let frames = clip.num_frames();
            if frames < CONTEXT + n + 1 {
                continue;
            }
            for _ in 0..a.pairs {
                let s = rng.random_range(CONTEXT..frames - n);
                let truth = clip.slice(s + 1, s + n + 1);
                for (m, slot) in a.method.iter().zip(acc.iter_mut()) {
                    let pred = predict(*m, clip, s, n, params.as_ref())?;
                    slot.add(&pred, &truth, &feet)?;
                }
            }
        }
        for (m, slot) in a.method.iter().zip(&acc) {
            rows.push(slot.row(m.name(), n));
        }
    }
    let report = EvalReport::new(rows);
    print!("{}", report.to_table());
    if let Some(o) = &a.out {
        let o = ctx.paths.resolve(o);
        write_file(&o, report.to_jsonl().as_bytes())?;
        let methods: Vec<&str> = a.method.iter().map(|m| m.name()).collect();
        write_echo(&o, "eval", &ctx.cfg, json!({ "methods": methods, "frames": lengths, "pairs": a.pairs }))?;
    }
    Ok(())
}

/// The `n` frames after `s`, as produced by `method`.
fn predict(method: EvalMethod, clip: &MotionClip, s: usize, n: usize, params: Option<&ModelParameters>) -> CliResult<MotionClip> {
    Ok(match method {
        EvalMethod::Truth => clip.slice(s + 1, s + n + 1),
        EvalMethod::Interp => {
            let a = PoseFrame::from_clip(clip, s)?;
            let b = PoseFrame::from_clip(clip, s + n)?;
            interpolate_baseline(&clip.skeleton, &a, &b, n + 1, clip.frame_time)?.slice(1, n + 1)
        }
        EvalMethod::Model => {
            let params = params.expect("checked by caller");
            let start = RolloutStart::from_clip(clip, s)?;
            let target = TargetPose::from_clip(clip, s + n)?;
            let guide = Guidance::from_clip(clip, s, s + n)?;
            let mut out = rollout(&start, &target, &guide, params)?;
            out.derive()?;
            out
        }
    })
}

pub fn serve(ctx: &mut Ctx, a: &ServeArgs) -> CliResult<()> {
    let wp = ctx.paths.resolve(&a.weights);
    let params = at(&wp, dcmoe::io::load(&wp))?;
    let gp = ctx.paths.resolve(&a.gallery);
    let g = at(&gp, gallery::io::load(&gp))?;
    let state = Arc::new(SessionState::new(params, g, ctx.cfg.search.clone(), a.count));
    info!(
        model_version = state.model_version,
        experts = state.params.config.experts,
        gallery = state.gallery.len(),
        "session loaded"
    );
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.bind)
            .await
            .map_err(|e| CliError::Data(format!("bind {}: {e}", a.bind)))?;
        info!(addr = %a.bind, "listening");
        axum::serve(listener, service::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Data(e.to_string()))
    })?;
    let _ = std::io::stdout().flush();
    Ok(())
}
