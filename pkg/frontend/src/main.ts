// Browser entry point: mount the console on #app against the same origin
// that served this page (the labeling service with --static-dir).

import { LabelApi } from './api.js';
import { initApp } from './app.js';

const root = document.getElementById('app');
if (root === null) {
  throw new Error('missing #app mount point');
}
const app = initApp(root, new LabelApi());
void app.refresh();
