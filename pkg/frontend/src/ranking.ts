// Client-side mirror of the server's rank-sum ordering, used only to sort
// the received cards for display. Selection authority stays server-side;
// this must merely agree with it: rank by labeledness probability ascending
// plus rank by entropy descending, ranks tie-broken by lower id, the final
// order tie-broken by lower d_prob then lower id.

export interface Scored {
  id: number;
  d_prob: number;
  entropy: number;
}

function rankPositions(items: readonly Scored[], key: (s: Scored) => [number, number]): Map<number, number> {
  const order = [...items].sort((a, b) => {
    const [a0, a1] = key(a);
    const [b0, b1] = key(b);
    return a0 - b0 || a1 - b1;
  });
  const ranks = new Map<number, number>();
  order.forEach((s, position) => ranks.set(s.id, position));
  return ranks;
}

export function rankSums(items: readonly Scored[]): Map<number, number> {
  const byDprob = rankPositions(items, (s) => [s.d_prob, s.id]);
  const byEntropy = rankPositions(items, (s) => [-s.entropy, s.id]);
  const sums = new Map<number, number>();
  for (const s of items) {
    sums.set(s.id, (byDprob.get(s.id) ?? 0) + (byEntropy.get(s.id) ?? 0));
  }
  return sums;
}

export function sortByRankSum<T extends Scored>(items: readonly T[]): T[] {
  const sums = rankSums(items);
  return [...items].sort(
    (a, b) => (sums.get(a.id) ?? 0) - (sums.get(b.id) ?? 0) || a.d_prob - b.d_prob || a.id - b.id,
  );
}
