// View-model for one labeling round. Two invariants live here:
//
//   1. No label is ever fabricated: cards start unlabeled, only setLabel()
//      (a human action) fills one in, and labelsForSubmit() refuses to
//      build a submission while any card is missing its label.
//   2. Each round commits at most once: the round number acts as the
//      idempotency key, so a retry after a network failure can check
//      whether its round already went through.

import { sortByRankSum } from './ranking.js';
import type { BatchItemWire, BatchView, BatchViewItem } from './types.js';

export class RoundState {
  private current: BatchView | null = null;
  private lastSubmittedRound: number | null = null;

  get view(): BatchView | null {
    return this.current;
  }

  beginRound(round: number, wire: readonly BatchItemWire[], nClasses: number): BatchView {
    const items: BatchViewItem[] = sortByRankSum(wire).map((w) => ({
      id: w.id,
      d_prob: w.d_prob,
      entropy: w.entropy,
      payload: w.payload,
      chosenLabel: null,
    }));
    this.current = { round, nClasses, items };
    return this.current;
  }

  clear(): void {
    this.current = null;
  }

  private mustView(): BatchView {
    if (this.current === null) {
      throw new Error('no round in progress');
    }
    return this.current;
  }

  private mustItem(id: number): BatchViewItem {
    const item = this.mustView().items.find((it) => it.id === id);
    if (item === undefined) {
      throw new RangeError(`id ${id} is not in the current batch`);
    }
    return item;
  }

  setLabel(id: number, classId: number): void {
    const view = this.mustView();
    if (!Number.isInteger(classId) || classId < 0 || classId >= view.nClasses) {
      throw new RangeError(`class ${classId} outside [0, ${view.nClasses})`);
    }
    this.mustItem(id).chosenLabel = classId;
  }

  clearLabel(id: number): void {
    this.mustItem(id).chosenLabel = null;
  }

  progress(): { chosen: number; total: number } {
    if (this.current === null) {
      return { chosen: 0, total: 0 };
    }
    const chosen = this.current.items.filter((it) => it.chosenLabel !== null).length;
    return { chosen, total: this.current.items.length };
  }

  allLabeled(): boolean {
    return this.current !== null && this.current.items.every((it) => it.chosenLabel !== null);
  }

  /** The exact submission body; throws rather than invent a label. */
  labelsForSubmit(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const item of this.mustView().items) {
      if (item.chosenLabel === null) {
        throw new Error(`id ${item.id} has no label; refusing to submit`);
      }
      out[String(item.id)] = item.chosenLabel;
    }
    return out;
  }

  wasSubmitted(round: number): boolean {
    return this.lastSubmittedRound !== null && round <= this.lastSubmittedRound;
  }

  markSubmitted(round: number): void {
    this.lastSubmittedRound = round;
  }
}
