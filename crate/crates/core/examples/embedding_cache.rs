//! The content-addressed embedding cache: populate it once with a live
//! provider, then run entirely offline from the file.
//!
//! Run with: cargo run --example embedding_cache

use dataless_intent::embedding::{
    cosine, EmbeddingCache, EmbeddingProvider, EmbeddingSource, HashedBowEmbedder,
};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let cache_path = dir.path().join("embeddings.jsonl");

    let embedder = HashedBowEmbedder::new(128, 42)?;
    let model = embedder.model_id().to_string();

    let texts = [
        "play some jazz music",
        "add this song to my playlist",
        "what is the weather in boston",
    ];

    // First pass: a live provider fills the cache file.
    {
        let source = EmbeddingSource::new(
            EmbeddingCache::open(&cache_path)?,
            Some(Box::new(embedder)),
            model.clone(),
            16,
        )?;
        let embeddings = source.embed_all(&texts)?;
        println!("embedded {} texts into {}", embeddings.len(), cache_path.display());
        println!("cache entries: {}", source.cache().len());

        let play_music = cosine(&embeddings[0], &embeddings[1])?;
        let play_weather = cosine(&embeddings[0], &embeddings[2])?;
        println!("cosine(play music, add song):    {play_music:.4}");
        println!("cosine(play music, get weather): {play_weather:.4}");
    }

    // Second pass: no provider at all; every lookup is served from disk.
    let offline = EmbeddingSource::new(EmbeddingCache::open(&cache_path)?, None, model, 16)?;
    let reloaded = offline.embed_all(&texts)?;
    println!("offline reload produced {} vectors, dim {}", reloaded.len(), reloaded[0].dim());

    // A text that was never cached is a hard input error offline.
    match offline.embed_one("completely new text") {
        Err(error) => println!("offline miss fails as expected: {error}"),
        Ok(_) => unreachable!("uncached text cannot be served offline"),
    }
    Ok(())
}
