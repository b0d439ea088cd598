/**
 * Deterministic sentence embedder.
 *
 * Texts are mapped to a fixed-dimension vector by hashing word unigrams and
 * character trigrams into buckets, then normalizing to unit L2 length so
 * clients can compute cosine similarity as a plain dot product. The model
 * has no learned weights: identical (model, text) pairs always produce
 * identical vectors, which is the property the coding pipeline depends on.
 */

export const MODEL_ID = "hashed-ngram-256-v1";
export const DIM = 256;
export const MAX_TEXT_LENGTH = 8192;

/** FNV-1a 32-bit hash, stable across platforms. */
function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

function tokens(text: string): string[] {
  return text
    .toLowerCase()
    .replace(/[^\p{L}\p{N}\s]/gu, " ")
    .split(/\s+/)
    .filter((t) => t.length > 0);
}

function features(text: string): string[] {
  const words = tokens(text);
  const feats: string[] = [];
  for (const w of words) {
    feats.push(`w:${w}`);
    const padded = `^${w}$`;
    for (let i = 0; i + 3 <= padded.length; i++) {
      feats.push(`c:${padded.slice(i, i + 3)}`);
    }
  }
  return feats;
}

export function embed(text: string): number[] {
  const vec = new Array<number>(DIM).fill(0);
  for (const f of features(text)) {
    const h = fnv1a(f);
    const bucket = h % DIM;
    // second hash bit decides the sign, reducing bucket collisions' bias
    const sign = (h >>> 16) & 1 ? 1 : -1;
    vec[bucket] += sign;
  }
  let norm = Math.sqrt(vec.reduce((s, x) => s + x * x, 0));
  if (norm === 0) {
    // featureless text: a fixed unit vector keeps the norm invariant
    vec[0] = 1;
    norm = 1;
  }
  return vec.map((x) => x / norm);
}

export function embedBatch(texts: string[]): number[][] {
  return texts.map(embed);
}
