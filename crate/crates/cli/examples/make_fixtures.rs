//! Regenerates the checked-in synthetic data under `data/`:
//!
//! ```text
//! cargo run -p gdpcast-cli --example make_fixtures -- data
//! ```

use std::path::{Path, PathBuf};

use gdpcast::embeddings::{save_embeddings, stub_embedding, EmbeddingRecord, STATIC_KEY};
use gdpcast::lights::raster::{save_mask, save_raster};
use gdpcast::lights::{lights_from_dirs, write_light_csv, LightMode};
use gdpcast::panel::{light_column_names, Frequency, Panel};
use gdpcast::synth::{indicator_names, synthetic_masks, synthetic_panel, synthetic_rasters, RasterLayout, SynthSpec};

const EMBED_DIM: usize = 32;
const EMBED_SEED: u64 = 2024;

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn write_panel(panel: &Panel, path: &Path) -> Res<()> {
    panel.write_csv(std::fs::File::create(path)?)?;
    println!("{}", path.display());
    Ok(())
}

/// Rasters and masks for `panel`, then the light CSV computed from them.
fn write_lights(panel: &Panel, root: &Path, tag: &str, seed: u64) -> Res<()> {
    let layout = RasterLayout::for_countries(panel.countries.len(), 3);
    let raster_dir = root.join("rasters").join(tag);
    let mask_dir = root.join("masks").join(tag);
    std::fs::create_dir_all(&raster_dir)?;
    std::fs::create_dir_all(&mask_dir)?;
    for mask in synthetic_masks(&panel.countries, layout)? {
        save_mask(mask_dir.join(format!("{}.nlm", mask.country)), &mask)?;
    }
    for ((year, month), grid) in synthetic_rasters(panel, layout, seed)? {
        save_raster(raster_dir.join(format!("{year:04}-{month:02}.nlr")), &grid)?;
    }
    let records = lights_from_dirs(&raster_dir, &mask_dir)?;
    let out = root.join("lights").join(format!("{tag}.csv"));
    write_light_csv(std::fs::File::create(&out)?, &records)?;
    println!("{} ({} records)", out.display(), records.len());
    Ok(())
}

fn write_embeddings(root: &Path) -> Res<()> {
    let mut ids = indicator_names(20);
    for freq in [Frequency::Yearly, Frequency::Quarterly] {
        for mode in [LightMode::SumMeanStd, LightMode::Mean, LightMode::EveryMonthMean] {
            for name in light_column_names(mode, freq) {
                if !ids.contains(&name) {
                    ids.push(name);
                }
            }
        }
    }
    let records: Vec<EmbeddingRecord> = ids
        .iter()
        .map(|id| EmbeddingRecord {
            id: id.clone(),
            key: STATIC_KEY.into(),
            vector: stub_embedding(id, EMBED_DIM, EMBED_SEED),
        })
        .collect();
    let out = root.join("embeddings").join(format!("stub_e{EMBED_DIM}.nnemb"));
    save_embeddings(&out, &records)?;
    println!("{} ({} records)", out.display(), records.len());
    Ok(())
}

const COMMON_TRAIN: &str = r#"
[cv]
k = 5
seed = 7

[train]
batch_size = 16
max_epochs = 60
patience = 10
"#;

fn configs() -> Vec<(&'static str, String)> {
    let header = |dataset: &str, label: &str, period: &str, task: &str, family: &str| {
        format!(
            "dataset = \"panels/{dataset}.csv\"\noutput_dir = \"runs\"\ndataset_label = \"{label}\"\n\
             period_label = \"{period}\"\ntask = \"{task}\"\nfamily = \"{family}\"\nseed = 11\n"
        )
    };
    vec![
        (
            "yearly_mlp",
            format!(
                "{}{COMMON_TRAIN}\n[grid]\nlr = [0.003, 0.01]\nwidth = [16, 32]\n",
                header("yearly_13_19", "yearly", "13-19", "regression", "mlp")
            ),
        ),
        (
            "yearly_mlp_lights",
            format!(
                "{}lights = \"lights/yearly.csv\"\nlight_mode = \"every_month_mean\"\n{COMMON_TRAIN}\n[grid]\nlr = [0.003, 0.01]\n",
                header("yearly_13_19", "yearly", "13-19", "regression", "mlp")
            ),
        ),
        (
            "yearly_linear_ridge",
            format!(
                "{}lights = \"lights/yearly.csv\"\nlight_mode = \"sum_mean_std\"\n{COMMON_TRAIN}\n[grid]\nridge_eps = [0.0, 0.001, 0.1]\n",
                header("yearly_13_19", "yearly", "13-19", "regression", "linear")
            ),
        ),
        (
            "yearly_rt",
            format!(
                "{}embeddings = \"embeddings/stub_e{EMBED_DIM}.nnemb\"\nlights = \"lights/yearly.csv\"\nlight_mode = \"mean\"\n\
                 {COMMON_TRAIN}\n[grid]\nlr = [0.003]\ndim = [8, 16]\n\n[model]\nproj_dim = 8\nvalue_dim = 8\nlayers = 1\nheads = 2\nff_width = 16\n",
                header("yearly_13_19", "yearly", "13-19", "regression", "rt")
            ),
        ),
        (
            "yearly_lstm_ar",
            format!(
                "{}seq_len = 8\n{COMMON_TRAIN}\n[grid]\nlr = [0.003, 0.01]\nwidth = [8]\n",
                header("yearly_80_19", "yearly", "80-19", "autoregression", "lstm")
            ),
        ),
        (
            "quarterly_patch_multi",
            format!(
                "{}seq_len = 8\n{COMMON_TRAIN}\n[loss]\nw_gdp = 4.0\n\n[grid]\nlr = [0.003]\nw_gdp = [1.0, 4.0]\n\n\
                 [model]\npatch_len = 4\nstride = 2\nwidth = 8\nheads = 2\nff_width = 16\nlayers = 1\n",
                header("quarterly_13_19", "quarterly", "13-19", "multi_indicator", "patch")
            ),
        ),
        (
            "quarterly_patch_too_long",
            format!(
                "{}seq_len = 8\n{COMMON_TRAIN}\n[grid]\npatch_len = [4, 12]\n",
                header("quarterly_13_19", "quarterly", "13-19", "multi_indicator", "patch")
            ),
        ),
    ]
}

fn main() -> Res<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    for sub in ["panels", "lights", "embeddings"] {
        std::fs::create_dir_all(root.join(sub))?;
    }
    let yearly = synthetic_panel(&SynthSpec {
        countries: 20,
        first_year: 2013,
        last_year: 2019,
        frequency: Frequency::Yearly,
        indicators: 13,
        missing_rate: 0.0,
        seed: 1,
    })?;
    let quarterly = synthetic_panel(&SynthSpec {
        countries: 20,
        first_year: 2013,
        last_year: 2019,
        frequency: Frequency::Quarterly,
        indicators: 20,
        missing_rate: 0.0,
        seed: 2,
    })?;
    let long = synthetic_panel(&SynthSpec {
        countries: 12,
        first_year: 1980,
        last_year: 2019,
        frequency: Frequency::Yearly,
        indicators: 13,
        missing_rate: 0.01,
        seed: 3,
    })?;
    write_panel(&yearly, &root.join("panels/yearly_13_19.csv"))?;
    write_panel(&quarterly, &root.join("panels/quarterly_13_19.csv"))?;
    write_panel(&long, &root.join("panels/yearly_80_19.csv"))?;
    write_lights(&yearly, &root, "yearly", 10)?;
    write_lights(&quarterly, &root, "quarterly", 20)?;
    write_embeddings(&root)?;
    for (name, text) in configs() {
        let path = root.join(format!("{name}.toml"));
        std::fs::write(&path, text)?;
        println!("{}", path.display());
    }
    Ok(())
}
