/**
 * Scoring helpers for judging a trained model without the scoring toolkit:
 * per-sample reconstruction error and AUROC over good/anomalous labels.
 */

/** Mean squared error between two equally sized rasters. */
export function mseScore(a: Float32Array, b: Float32Array): number {
  if (a.length !== b.length) {
    throw new Error(`length mismatch: ${a.length} vs ${b.length}`);
  }
  let acc = 0;
  for (let i = 0; i < a.length; i++) {
    const d = a[i] - b[i];
    acc += d * d;
  }
  return acc / a.length;
}

/**
 * Area under the ROC curve by the rank-sum route: the probability that a
 * random anomalous score exceeds a random good score, with ties counted
 * half. Exact, no threshold sweep.
 */
export function auroc(scores: number[], labels: number[]): number {
  if (scores.length !== labels.length) {
    throw new Error(`scores and labels differ in length: ${scores.length} vs ${labels.length}`);
  }
  const pos = scores.filter((_, i) => labels[i] !== 0);
  const neg = scores.filter((_, i) => labels[i] === 0);
  if (pos.length === 0 || neg.length === 0) {
    throw new Error('AUROC needs at least one positive and one negative sample');
  }
  const all = scores
    .map((s, i) => ({ s, positive: labels[i] !== 0 }))
    .sort((a, b) => a.s - b.s);
  // average ranks over tie groups
  let rankSumPos = 0;
  let i = 0;
  while (i < all.length) {
    let j = i;
    while (j + 1 < all.length && all[j + 1].s === all[i].s) j++;
    const avgRank = (i + j) / 2 + 1; // 1-based
    for (let k = i; k <= j; k++) {
      if (all[k].positive) rankSumPos += avgRank;
    }
    i = j + 1;
  }
  const nPos = pos.length;
  const nNeg = neg.length;
  return (rankSumPos - (nPos * (nPos + 1)) / 2) / (nPos * nNeg);
}
