// The labeling console: render the queried batch as cards, take class
// choices from clicks or keys 1..K, submit a complete round, and keep the
// status line and accuracy chart mirroring the server.
//
// Everything renders from server state plus the in-progress choices; a page
// refresh rebuilds the whole view from /status (and /batch when a round is
// open), so the client holds no state the protocol cannot restore.

import { ApiError, LabelApi } from './api.js';
import { RoundState } from './state.js';
import type { BatchViewItem, CurveInfo, StatusInfo } from './types.js';

const SEARCHABLE_THRESHOLD = 10; // above this many classes, buttons give way to a filterable list

export interface AppHandle {
  refresh(): Promise<void>;
  fetchRound(): Promise<void>;
  submit(): Promise<void>;
  readonly state: RoundState;
}

export function initApp(root: HTMLElement, api: LabelApi): AppHandle {
  root.innerHTML = `
    <header>
      <h1>labeling console</h1>
      <div id="status-line">loading...</div>
      <div id="banner" class="banner hidden"></div>
    </header>
    <main>
      <section id="batch-panel">
        <div class="controls">
          <button id="fetch-btn" type="button">request next batch</button>
          <button id="submit-btn" type="button" disabled>submit labels</button>
          <span id="progress"></span>
        </div>
        <div id="cards"></div>
        <p class="kbd-hint">click a card (or tab to it), then keys 1..K pick its class</p>
      </section>
      <section id="curve-panel">
        <h2>accuracy vs labels</h2>
        <svg id="curve" viewBox="0 0 320 200" width="320" height="200"></svg>
        <div id="curve-note"></div>
      </section>
    </main>`;

  const statusLine = root.querySelector('#status-line') as HTMLElement;
  const banner = root.querySelector('#banner') as HTMLElement;
  const fetchBtn = root.querySelector('#fetch-btn') as HTMLButtonElement;
  const submitBtn = root.querySelector('#submit-btn') as HTMLButtonElement;
  const progressEl = root.querySelector('#progress') as HTMLElement;
  const cardsEl = root.querySelector('#cards') as HTMLElement;
  const curveSvg = root.querySelector('#curve') as unknown as SVGSVGElement;
  const curveNote = root.querySelector('#curve-note') as HTMLElement;

  const state = new RoundState();
  let lastStatus: StatusInfo | null = null;
  let busy = false; // one in-flight mutation at a time
  const cardErrors = new Map<number, string>();

  // -- banner ----------------------------------------------------------

  function showBanner(message: string): void {
    banner.textContent = message;
    banner.classList.remove('hidden');
  }

  function clearBanner(): void {
    banner.textContent = '';
    banner.classList.add('hidden');
  }

  // -- rendering -------------------------------------------------------

  function renderStatus(): void {
    if (lastStatus === null) {
      statusLine.textContent = 'server unreachable';
      return;
    }
    const s = lastStatus;
    statusLine.textContent =
      `round ${s.round} | ${s.labeled_count} labeled / ${s.unlabeled_count} unlabeled | ` +
      `budget ${s.budget} | ${s.n_classes} classes | state ${s.state}`;
  }

  function renderThumb(item: BatchViewItem, into: HTMLElement): void {
    const side = item.payload.image_side;
    if (side !== undefined && side > 0) {
      const canvas = document.createElement('canvas');
      const scale = Math.max(1, Math.floor(84 / side));
      canvas.width = side * scale;
      canvas.height = side * scale;
      const ctx = canvas.getContext('2d');
      if (ctx !== null) {
        for (let r = 0; r < side; r += 1) {
          for (let c = 0; c < side; c += 1) {
            const v = Math.round(255 * (item.payload.features[r * side + c] ?? 0));
            ctx.fillStyle = `rgb(${v},${v},${v})`;
            ctx.fillRect(c * scale, r * scale, scale, scale);
          }
        }
      }
      into.appendChild(canvas);
      return;
    }
    // Vector sample: place its 2-D projection inside the batch's bounding box.
    const view = state.view;
    const xs = view === null ? [item.payload.xy[0]] : view.items.map((it) => it.payload.xy[0]);
    const ys = view === null ? [item.payload.xy[1]] : view.items.map((it) => it.payload.xy[1]);
    const pad = 1e-9;
    const x0 = Math.min(...xs);
    const x1 = Math.max(...xs) + pad;
    const y0 = Math.min(...ys);
    const y1 = Math.max(...ys) + pad;
    const px = 6 + (72 * (item.payload.xy[0] - x0)) / (x1 - x0);
    const py = 78 - (72 * (item.payload.xy[1] - y0)) / (y1 - y0);
    const ns = 'http://www.w3.org/2000/svg';
    const svg = document.createElementNS(ns, 'svg');
    svg.setAttribute('viewBox', '0 0 84 84');
    svg.setAttribute('width', '84');
    svg.setAttribute('height', '84');
    const dot = document.createElementNS(ns, 'circle');
    dot.setAttribute('cx', px.toFixed(1));
    dot.setAttribute('cy', py.toFixed(1));
    dot.setAttribute('r', '4');
    dot.setAttribute('fill', '#2b6cb0');
    svg.appendChild(dot);
    into.appendChild(svg);
  }

  function renderClassPicker(item: BatchViewItem, nClasses: number, into: HTMLElement): void {
    if (nClasses <= SEARCHABLE_THRESHOLD) {
      for (let k = 0; k < nClasses; k += 1) {
        const btn = document.createElement('button');
        btn.type = 'button';
        btn.textContent = String(k);
        btn.title = `key ${k + 1}`;
        btn.dataset.classId = String(k);
        if (item.chosenLabel === k) {
          btn.classList.add('selected');
        }
        btn.addEventListener('click', () => chooseLabel(item.id, k));
        into.appendChild(btn);
      }
      return;
    }
    // Large K: a filter box over a clickable list instead of a button wall.
    const filter = document.createElement('input');
    filter.type = 'text';
    filter.placeholder = 'filter classes';
    filter.className = 'class-filter';
    const list = document.createElement('ul');
    list.className = 'class-list';
    const rebuild = () => {
      list.textContent = '';
      const needle = filter.value.trim();
      for (let k = 0; k < nClasses; k += 1) {
        if (needle !== '' && !String(k).includes(needle)) {
          continue;
        }
        const li = document.createElement('li');
        li.textContent = `class ${k}`;
        li.dataset.classId = String(k);
        if (item.chosenLabel === k) {
          li.classList.add('selected');
        }
        li.addEventListener('click', () => chooseLabel(item.id, k));
        list.appendChild(li);
      }
    };
    filter.addEventListener('input', rebuild);
    rebuild();
    into.appendChild(filter);
    into.appendChild(list);
  }

  function renderCards(): void {
    cardsEl.textContent = '';
    const view = state.view;
    if (view === null) {
      return;
    }
    for (const item of view.items) {
      const card = document.createElement('article');
      card.className = 'card';
      card.tabIndex = 0;
      card.dataset.id = String(item.id);
      if (cardErrors.has(item.id)) {
        card.classList.add('flagged');
      }

      const thumb = document.createElement('div');
      thumb.className = 'thumb';
      renderThumb(item, thumb);
      card.appendChild(thumb);

      const meta = document.createElement('div');
      meta.className = 'meta';
      meta.textContent =
        `id ${item.id} | d_prob ${item.d_prob.toFixed(3)} | entropy ${item.entropy.toFixed(3)}`;
      card.appendChild(meta);

      const classes = document.createElement('div');
      classes.className = 'classes';
      renderClassPicker(item, view.nClasses, classes);
      card.appendChild(classes);

      const err = document.createElement('div');
      err.className = 'card-error';
      const message = cardErrors.get(item.id);
      if (message === undefined) {
        err.classList.add('hidden');
      } else {
        err.textContent = message;
      }
      card.appendChild(err);

      card.addEventListener('keydown', (event) => {
        const k = Number.parseInt(event.key, 10) - 1;
        if (Number.isInteger(k) && k >= 0 && k < view.nClasses) {
          chooseLabel(item.id, k);
          event.preventDefault();
        }
      });
      cardsEl.appendChild(card);
    }
  }

  function renderControls(): void {
    const { chosen, total } = state.progress();
    progressEl.textContent = total === 0 ? '' : `${chosen}/${total} labeled`;
    submitBtn.disabled = busy || !state.allLabeled();
    fetchBtn.disabled = busy || state.view !== null;
  }

  function renderCurve(curve: CurveInfo): void {
    curveSvg.textContent = '';
    const pts = curve.points.filter((p) => p.accuracy !== null);
    curveNote.textContent =
      pts.length === 0
        ? 'no accuracy points yet; finish a round'
        : `${curve.dataset}: ${pts.length} point(s), budget ${curve.budget} per round`;
    if (pts.length === 0) {
      return;
    }
    const ns = 'http://www.w3.org/2000/svg';
    const xs = pts.map((p) => p.labeled_count);
    const x0 = Math.min(...xs);
    const x1 = Math.max(...xs) + 1e-9;
    const sx = (x: number) => 24 + (280 * (x - x0)) / (x1 - x0);
    const sy = (a: number) => 184 - 168 * a;
    const axis = document.createElementNS(ns, 'path');
    axis.setAttribute('d', 'M 24 16 L 24 184 L 304 184');
    axis.setAttribute('stroke', '#a0aec0');
    axis.setAttribute('fill', 'none');
    curveSvg.appendChild(axis);
    const line = document.createElementNS(ns, 'polyline');
    line.setAttribute(
      'points',
      pts.map((p) => `${sx(p.labeled_count).toFixed(1)},${sy(p.accuracy as number).toFixed(1)}`).join(' '),
    );
    line.setAttribute('fill', 'none');
    line.setAttribute('stroke', '#2b6cb0');
    line.setAttribute('stroke-width', '2');
    curveSvg.appendChild(line);
    for (const p of pts) {
      const dot = document.createElementNS(ns, 'circle');
      dot.setAttribute('cx', sx(p.labeled_count).toFixed(1));
      dot.setAttribute('cy', sy(p.accuracy as number).toFixed(1));
      dot.setAttribute('r', '3');
      dot.setAttribute('fill', '#2b6cb0');
      dot.dataset.labeled = String(p.labeled_count);
      curveSvg.appendChild(dot);
    }
  }

  function render(): void {
    renderStatus();
    renderCards();
    renderControls();
  }

  // -- actions ---------------------------------------------------------

  function chooseLabel(id: number, classId: number): void {
    if (busy || state.view === null) {
      return;
    }
    state.setLabel(id, classId);
    cardErrors.delete(id);
    render();
  }

  async function refreshStatus(): Promise<void> {
    lastStatus = await api.status();
  }

  async function refreshCurve(): Promise<void> {
    renderCurve(await api.curve());
  }

  async function recoverOpenBatch(): Promise<void> {
    // A round is already out there (this tab refreshed, or someone else
    // asked); rebuild the cards from the server's copy of the batch.
    try {
      const open = await api.openBatch();
      if (state.view === null || state.view.round !== open.round) {
        state.beginRound(open.round, open.batch, lastStatus?.n_classes ?? 0);
        cardErrors.clear();
      }
    } catch {
      // nothing awaiting labels (likely still training); status shows that
    }
  }

  async function refresh(): Promise<void> {
    try {
      await refreshStatus();
      if (lastStatus !== null && lastStatus.state === 'awaiting_labels') {
        await recoverOpenBatch();
      } else if (lastStatus !== null && lastStatus.state === 'idle') {
        state.clear();
      }
      await refreshCurve();
    } catch (err) {
      showBanner(err instanceof Error ? err.message : String(err));
    }
    render();
  }

  async function fetchRound(): Promise<void> {
    if (busy || state.view !== null) {
      return;
    }
    busy = true;
    clearBanner();
    render();
    try {
      await refreshStatus();
      const rb = await api.nextRound();
      state.beginRound(rb.round, rb.batch, lastStatus?.n_classes ?? 0);
      cardErrors.clear();
      await refreshStatus();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        showBanner(`round in progress: ${err.message}`);
        await recoverOpenBatch();
      } else {
        showBanner(err instanceof Error ? err.message : String(err));
      }
    } finally {
      busy = false;
      render();
    }
  }

  function handleSubmitError(err: ApiError): void {
    const idMatch = /id (\d+)/.exec(err.message);
    if (err.status === 400 && idMatch !== null) {
      // Flag the offending card; the server stored nothing (submissions
      // validate atomically) so every other choice is still intact locally.
      cardErrors.set(Number(idMatch[1]), err.message);
    } else {
      showBanner(err.message);
    }
  }

  async function submitOnce(labels: Record<string, number>, round: number): Promise<boolean> {
    try {
      const result = await api.submitLabels(labels);
      return result.remaining === 0;
    } catch (err) {
      if (err instanceof ApiError) {
        handleSubmitError(err);
        return false;
      }
      // Network failure: the commit may or may not have landed. The round
      // number is the idempotency key; ask the server before resending.
      await refreshStatus();
      if (lastStatus !== null && (lastStatus.round > round || lastStatus.state !== 'awaiting_labels')) {
        return true; // it landed; never submit the same round twice
      }
      const retry = await api.submitLabels(labels);
      return retry.remaining === 0;
    }
  }

  async function submit(): Promise<void> {
    const view = state.view;
    if (busy || view === null || !state.allLabeled() || state.wasSubmitted(view.round)) {
      return;
    }
    const labels = state.labelsForSubmit();
    busy = true;
    render();
    try {
      const committed = await submitOnce(labels, view.round);
      if (committed) {
        state.markSubmitted(view.round);
        state.clear();
        cardErrors.clear();
        clearBanner();
        await refreshStatus();
        await refreshCurve();
      }
    } catch (err) {
      showBanner(err instanceof Error ? err.message : String(err));
    } finally {
      busy = false;
      render();
    }
  }

  fetchBtn.addEventListener('click', () => {
    void fetchRound();
  });
  submitBtn.addEventListener('click', () => {
    void submit();
  });

  render();
  return { refresh, fetchRound, submit, state };
}
