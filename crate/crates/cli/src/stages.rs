use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use vqat_audio::{parse_audio_mnist_name, preprocess_file, ManifestEntry};
use vqat_core::container::{write_atomic, Archive, StoredTensor};
use vqat_core::Tensor;
use vqat_eval::{
    evaluate_pipeline, pca_explained_variance, train_classifier, write_grid_png, EvalInputs, EvalReport,
};
use vqat_prior::{
    build_training_sequences, generate_class_fakes, generate_fake_set, FakeSet, GenerationMode, PriorTrainer,
};
use vqat_vqvae::tokens::encode_all;
use vqat_vqvae::{tokens_to_codes, Case, TokenGrid, Trainer, VqVae, CODEBOOK_SIZE};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::{sha256_file, sha256_json, RunManifest, StageRecord};

pub const SPECTROGRAMS: &str = "spectrograms.vqak";
pub const VQVAE: &str = "vqvae.vqak";
pub const LATENTS: &str = "latents.vqak";
pub const PRIOR: &str = "prior.vqak";
pub const FAKES: &str = "fakes.vqak";
pub const CLASSIFIER: &str = "classifier.vqak";
pub const REPORT: &str = "report.json";
pub const GRID: &str = "grid.png";
pub const PCA: &str = "pca.json";

type Result<T> = std::result::Result<T, CliError>;

macro_rules! log {
    ($stage:expr, $($arg:tt)*) => { eprintln!("[{}] {}", $stage, format!($($arg)*)) };
}

/// Options for `generate` beyond the config file.
#[derive(Clone, Debug, Default)]
pub struct GenerateRequest {
    pub class: Option<u8>,
    pub count: Option<usize>,
    pub output: Option<String>,
}

/// A run directory with its manifest.
pub struct Run {
    pub cfg: PipelineConfig,
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

struct Pending {
    stage: &'static str,
    start: Instant,
    config_digest: String,
    seed: u64,
    inputs: Vec<(String, String)>,
}

impl Run {
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        let dir = cfg.out_dir.clone();
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot create {}: {e}", dir.display())))?;
        let manifest = RunManifest::load(&dir)?;
        Ok(Self { cfg, dir, manifest })
    }

    fn begin<C: serde::Serialize>(&self, stage: &'static str, config: &C) -> Pending {
        log!(stage, "start");
        Pending {
            stage,
            start: Instant::now(),
            config_digest: sha256_json(config),
            seed: self.cfg.stage_seed(stage),
            inputs: Vec::new(),
        }
    }

    fn need(&self, p: &mut Pending, artifact: &str, producer: &str) -> Result<PathBuf> {
        let digest = self.manifest.require(&self.dir, artifact, producer)?;
        p.inputs.push((artifact.to_string(), digest));
        Ok(self.dir.join(artifact))
    }

    fn finish(&mut self, p: Pending, outputs: &[&str]) -> Result<()> {
        let mut rec = StageRecord {
            config_digest: p.config_digest,
            seed: p.seed,
            inputs: p.inputs.into_iter().collect(),
            seconds: p.start.elapsed().as_secs_f64(),
            ..Default::default()
        };
        for o in outputs {
            rec.outputs.insert(o.to_string(), sha256_file(&self.dir.join(o))?);
        }
        // Outputs now belong to this stage alone.
        for other in self.manifest.stages.values_mut() {
            other.outputs.retain(|k, _| !rec.outputs.contains_key(k));
        }
        self.manifest.stages.insert(p.stage.to_string(), rec);
        self.manifest.save(&self.dir)?;
        log!(p.stage, "done in {:.1}s", p.start.elapsed().as_secs_f64());
        Ok(())
    }

    pub fn preprocess(&mut self) -> Result<()> {
        let mut p = self.begin("preprocess", &self.cfg.preprocess);
        let root = self.cfg.data_root.canonicalize().map_err(|_| CliError::Dependency {
            artifact: self.cfg.data_root.display().to_string(),
            stage: "preprocess --data-root <dir>".into(),
        })?;
        let mut files = Vec::new();
        collect_wavs(&root, &mut files)?;
        files.sort();
        if files.is_empty() {
            return Err(CliError::Usage(format!("no .wav files under {}", root.display())));
        }
        let mut data = Vec::with_capacity(files.len() * 64 * 88);
        let mut entries = Vec::with_capacity(files.len());
        for f in &files {
            let spec = preprocess_file(f, &self.cfg.preprocess)
                .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", f.display())))?;
            data.extend(spec.values.data().iter().map(|&v| v as f32));
            let rel = f.strip_prefix(&root).unwrap_or(f).to_string_lossy().into_owned();
            let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
            entries.push(ManifestEntry {
                source: rel,
                label: spec.label,
                speaker: parse_audio_mnist_name(name).map(|(_, s)| s),
                scale_min: spec.scale_min,
                scale_max: spec.scale_max,
            });
            p.inputs.push((f.to_string_lossy().into_owned(), sha256_file(f)?));
        }
        let mut a = Archive::new(json!({
            "kind": "spectrograms",
            "config": self.cfg.preprocess,
            "entries": entries,
        }));
        a.insert("spectrograms", StoredTensor::from_vec(vec![files.len(), 1, 64, 88], &data)?);
        a.save(&self.dir.join(SPECTROGRAMS))?;
        log!("preprocess", "{} files", files.len());
        self.finish(p, &[SPECTROGRAMS])
    }

    pub fn train_vqvae(&mut self) -> Result<()> {
        let mut p = self.begin("train-vqvae", &self.cfg.vqvae);
        let (items, _) = load_spectrograms(&self.need(&mut p, SPECTROGRAMS, "preprocess")?)?;
        let mut t = Trainer::new(self.cfg.vqvae.clone())?;
        t.train(&items, |s| {
            log!("train-vqvae", "epoch {} loss {:.6} recon {:.6} codes {}", s.epoch, s.loss.total, s.loss.recon, s.codes_used)
        })?;
        t.save(&self.dir.join(VQVAE))?;
        self.finish(p, &[VQVAE])
    }

    pub fn export_latents(&mut self) -> Result<()> {
        let mut p = self.begin("export-latents", &self.cfg.case);
        let (items, entries) = load_spectrograms(&self.need(&mut p, SPECTROGRAMS, "preprocess")?)?;
        let model = self.load_vqvae(&mut p)?;
        let rows = encode_all(&model, &items, 16)?;
        let labels: Vec<Option<u8>> = entries.iter().map(|e| e.label).collect();
        let mut a = Archive::new(json!({ "kind": "latents", "case": model.case(), "labels": labels }));
        a.insert("tokens", StoredTensor::tokens(vec![rows.len(), model.case().tokens()], rows.concat())?);
        a.save(&self.dir.join(LATENTS))?;
        self.finish(p, &[LATENTS])
    }

    pub fn train_prior(&mut self) -> Result<()> {
        let mut p = self.begin("train-prior", &self.cfg.prior);
        let (rows, labels) = self.load_latents(&mut p)?;
        let seqs = build_training_sequences(&rows, &labels, self.cfg.conditioned)?;
        let mut t = PriorTrainer::new(self.cfg.prior.clone())?;
        t.train(&seqs, |e| log!("train-prior", "epoch {} ce {:.5}", e.epoch, e.loss))?;
        t.save(&self.dir.join(PRIOR))?;
        self.finish(p, &[PRIOR])
    }

    pub fn generate(&mut self, req: &GenerateRequest) -> Result<String> {
        let mut p = self.begin("generate", &self.cfg.generate);
        let prior = PriorTrainer::load(&self.need(&mut p, PRIOR, "train-prior")?)?;
        let g = &self.cfg.generate;
        let count = req.count.unwrap_or(g.per_class);
        let length = self.cfg.case.tokens();
        let mode = self.cfg.generation_mode();
        let set = match (req.class, mode) {
            (Some(d), GenerationMode::Conditioned) => {
                generate_class_fakes(&prior.model, d, count, length, g.temperature, p.seed)?
            }
            (Some(_), GenerationMode::Unconditioned) => {
                return Err(CliError::Usage("--class needs conditioned generation".into()))
            }
            (None, m) => generate_fake_set(&prior.model, m, count, length, g.temperature, g.start, p.seed)?,
        };
        let out = req.output.clone().unwrap_or_else(|| FAKES.to_string());
        set.save(&self.dir.join(&out))?;
        log!("generate", "{} sequences of {length} tokens -> {out}", set.len());
        self.finish(p, &[out.as_str()])?;
        Ok(out)
    }

    pub fn evaluate(&mut self, fakes: Option<&str>) -> Result<EvalReport> {
        let fakes_name = fakes.unwrap_or(FAKES);
        let mut p = self.begin("evaluate", &(&self.cfg.classifier, &self.cfg.eval));
        let (items, entries) = load_spectrograms(&self.need(&mut p, SPECTROGRAMS, "preprocess")?)?;
        let model = self.load_vqvae(&mut p)?;
        let (rows, labels) = self.load_latents(&mut p)?;
        let set = FakeSet::load(&self.need(&mut p, fakes_name, "generate")?)?;
        self.check_fake_length(&set)?;

        let (clf_items, clf_labels): (Vec<Tensor<f32>>, Vec<u8>) = items
            .iter()
            .zip(&entries)
            .filter_map(|(t, e)| e.label.map(|l| (t.clone(), l)))
            .unzip();
        let classifier = train_classifier(&clf_items, &clf_labels, self.cfg.classifier.clone())
            .map_err(|e| CliError::Usage(format!("classifier: {e}")))?;
        classifier.save(&self.dir.join(CLASSIFIER))?;

        let matched = match_reals(&set, &rows, &labels)?;
        let real_rows: Vec<Vec<u16>> = matched.iter().map(|&i| rows[i].clone()).collect();
        let real_labels: Option<Vec<u8>> = matched.iter().map(|&i| labels[i]).collect();
        let fake_labels: Option<Vec<u8>> = set.labels.iter().copied().collect();
        let real = decode_rows(&model, &real_rows)?;
        let fake = decode_rows(&model, &set.sequences)?;
        let report = evaluate_pipeline(
            EvalInputs {
                real: &real,
                real_labels: real_labels.as_deref(),
                fake: &fake,
                fake_labels: fake_labels.as_deref(),
                classifier: Some(&classifier),
            },
            &self.cfg.eval,
        )?;
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join(REPORT), &bytes)?;
        log!(
            "evaluate",
            "fidelity {:.4} diversity {:.4} top_f1 {:.4} accuracy {:?}",
            report.fidelity,
            report.diversity,
            report.top_f1,
            report.accuracy
        );
        self.finish(p, &[CLASSIFIER, REPORT])?;
        Ok(report)
    }

    pub fn plot(&mut self, fakes: Option<&str>) -> Result<()> {
        let fakes_name = fakes.unwrap_or(FAKES);
        let mut p = self.begin("plot", &self.cfg.plot);
        let (items, _) = load_spectrograms(&self.need(&mut p, SPECTROGRAMS, "preprocess")?)?;
        let model = self.load_vqvae(&mut p)?;
        let set = FakeSet::load(&self.need(&mut p, fakes_name, "generate")?)?;
        self.check_fake_length(&set)?;
        let k = self.cfg.plot.count.max(1);
        let originals: Vec<Vec<f64>> = items.iter().take(k).map(to_f64).collect();
        let mut recon = Vec::new();
        for t in items.iter().take(k) {
            let x = t.clone().reshape([1, 1, 64, 88])?;
            recon.push(to_f64(&model.reconstruct(&x)?));
        }
        let seqs: Vec<Vec<u16>> = set.sequences.iter().take(k).cloned().collect();
        let fakes: Vec<Vec<f64>> = decode_rows(&model, &seqs)?.iter().map(to_f64).collect();
        let grid: Vec<Vec<&[f64]>> = [&originals, &recon, &fakes]
            .iter()
            .map(|row| row.iter().map(Vec::as_slice).collect())
            .filter(|row: &Vec<&[f64]>| !row.is_empty())
            .collect();
        write_grid_png(&self.dir.join(GRID), &grid, 64, 88)?;
        self.finish(p, &[GRID])
    }

    pub fn pca_dim(&mut self, threshold: f64) -> Result<usize> {
        let mut p = self.begin("pca-dim", &threshold);
        let (items, _) = load_spectrograms(&self.need(&mut p, SPECTROGRAMS, "preprocess")?)?;
        let rows: Vec<Vec<f64>> = items.iter().map(to_f64).collect();
        let n = pca_explained_variance(&rows, threshold)?;
        let mut bytes = serde_json::to_vec_pretty(&json!({
            "threshold": threshold,
            "n_components": n,
            "n_samples": rows.len(),
            "dims": rows.first().map_or(0, Vec::len),
        }))?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join(PCA), &bytes)?;
        self.finish(p, &[PCA])?;
        Ok(n)
    }

    fn load_vqvae(&self, p: &mut Pending) -> Result<VqVae<f32>> {
        let model = Trainer::load(&self.need(p, VQVAE, "train-vqvae")?)?.model;
        if model.case() != self.cfg.case {
            return Err(CliError::Usage(format!(
                "the VQ-VAE was trained for case {}, the config says case {}",
                model.case().tag(),
                self.cfg.case.tag()
            )));
        }
        Ok(model)
    }

    fn load_latents(&self, p: &mut Pending) -> Result<(Vec<Vec<u16>>, Vec<Option<u8>>)> {
        let a = Archive::load(&self.need(p, LATENTS, "export-latents")?)?;
        let bad = |m: String| CliError::Runtime(anyhow::anyhow!("{LATENTS}: {m}"));
        if a.header["kind"] != "latents" {
            return Err(bad("not a latent archive".into()));
        }
        let case: Case = serde_json::from_value(a.header["case"].clone())?;
        if case != self.cfg.case {
            return Err(CliError::Usage(format!(
                "latents are case {}, the config says case {}",
                case.tag(),
                self.cfg.case.tag()
            )));
        }
        let labels: Vec<Option<u8>> = serde_json::from_value(a.header["labels"].clone())?;
        let t = a.get("tokens")?;
        let per = case.tokens();
        let rows: Vec<Vec<u16>> = t.as_u16()?.chunks(per).map(<[u16]>::to_vec).collect();
        if rows.len() != labels.len() {
            return Err(bad(format!("{} grids but {} labels", rows.len(), labels.len())));
        }
        Ok((rows, labels))
    }

    fn check_fake_length(&self, set: &FakeSet) -> Result<()> {
        if set.is_empty() {
            return Err(CliError::Usage("fake set is empty".into()));
        }
        if set.seq_len() != self.cfg.case.tokens() {
            return Err(CliError::Usage(format!(
                "fakes have {} tokens, case {} needs {}",
                set.seq_len(),
                self.cfg.case.tag(),
                self.cfg.case.tokens()
            )));
        }
        Ok(())
    }
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_wavs(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    Ok(())
}

pub fn load_spectrograms(path: &Path) -> Result<(Vec<Tensor<f32>>, Vec<ManifestEntry>)> {
    let a = Archive::load(path)?;
    if a.header["kind"] != "spectrograms" {
        return Err(CliError::Runtime(anyhow::anyhow!("{} is not a spectrogram archive", path.display())));
    }
    let entries: Vec<ManifestEntry> = serde_json::from_value(a.header["entries"].clone())?;
    let all: Tensor<f32> = a.get("spectrograms")?.to_tensor()?;
    let n = all.shape()[0];
    let items = (0..n)
        .map(|i| Ok(all.slice_outer(i)?))
        .collect::<std::result::Result<Vec<_>, vqat_core::NnError>>()?;
    Ok((items, entries))
}

/// Picks one real latent per fake: the next item of the same class for
/// conditioned fakes, round-robin otherwise.
fn match_reals(set: &FakeSet, rows: &[Vec<u16>], labels: &[Option<u8>]) -> Result<Vec<usize>> {
    if rows.is_empty() {
        return Err(CliError::Usage("no real latents".into()));
    }
    let mut next = [0usize; 10];
    let mut out = Vec::with_capacity(set.len());
    for (i, l) in set.labels.iter().enumerate() {
        match l {
            None => out.push(i % rows.len()),
            Some(d) => {
                let pool: Vec<usize> = (0..rows.len()).filter(|&j| labels[j] == Some(*d)).collect();
                if pool.is_empty() {
                    return Err(CliError::Usage(format!("no real items of class {d} to compare against")));
                }
                out.push(pool[next[*d as usize] % pool.len()]);
                next[*d as usize] += 1;
            }
        }
    }
    Ok(out)
}

/// Decodes token rows to `[1, 64, 88]` spectrograms.
pub fn decode_rows(model: &VqVae<f32>, rows: &[Vec<u16>]) -> Result<Vec<Tensor<f32>>> {
    let mut out = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(16) {
        let grid = TokenGrid::new(model.case(), chunk.concat(), CODEBOOK_SIZE)?;
        let y = model.decode(&tokens_to_codes(&grid, &model.codebook)?)?;
        for b in 0..chunk.len() {
            out.push(y.slice_outer(b)?);
        }
    }
    Ok(out)
}

fn to_f64(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}
