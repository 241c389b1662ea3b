//! Patch a channel, embed the patches as tokens and hide 40% of them.

use csifm::chansim::{corpus_sample, CorpusConfig};
use csifm::numerics::init;
use csifm::tokenizer::{apply_mask, embed_patches, partition_patches, plan_mask, reassemble_patches, PatchSpec, PositionalEncoding};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> csifm::Result<()> {
    let h = corpus_sample(0, 3, &CorpusConfig::default())?;
    let spec = PatchSpec::communication();
    let patches = partition_patches(&h, &spec)?;
    let grid = spec.grid(h.dims())?;
    println!("{:?} channel -> grid {grid:?} = {} patches of width {}", h.dims(), patches.len(), patches.width());

    let back = reassemble_patches(&patches.values, &patches.positions, &spec, h.dims())?;
    println!("reassembly exact: {}", back == *h.values());

    let pe = PositionalEncoding::new(spec.d_model);
    let w = init::xavier(&mut ChaCha8Rng::seed_from_u64(0), patches.width(), spec.d_model);
    let tokens = embed_patches(&patches, &w, &pe)?;
    let plan = plan_mask(tokens.len(), 0.4, 11)?;
    let masked = apply_mask(&tokens, &plan, &vec![0.0; spec.d_model], &pe)?;
    let changed = (0..tokens.len()).filter(|&i| tokens.tokens.row(i) != masked.tokens.row(i)).count();
    println!("masked {} of {} tokens ({changed} rows replaced): {:?}...", plan.masked.len(), tokens.len(), &plan.masked[..8]);
    Ok(())
}
