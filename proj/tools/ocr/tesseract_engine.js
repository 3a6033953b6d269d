#!/usr/bin/env node
// OCR engine contract: `tesseract_engine.js <image>` prints the recognized
// text on stdout and exits 0. `--version` prints the engine id.
const path = require('path');

const LANG = 'eng';
const DATA = path.join(__dirname, 'node_modules/@tesseract.js-data/eng/4.0.0_best_int');

function version() {
  const tjs = require('tesseract.js/package.json');
  const data = require('@tesseract.js-data/eng/package.json');
  return `tesseract.js-${tjs.version}/${LANG}-${data.version}-4.0.0_best_int`;
}

async function main(argv) {
  if (argv.length !== 1) {
    process.stderr.write('usage: tesseract_engine.js <image> | --version\n');
    return 64;
  }
  if (argv[0] === '--version') {
    process.stdout.write(version() + '\n');
    return 0;
  }
  const { createWorker } = require('tesseract.js');
  const worker = await createWorker(LANG, 1, { langPath: DATA, cacheMethod: 'none', gzip: true });
  try {
    const { data } = await worker.recognize(argv[0]);
    process.stdout.write(data.text);
  } finally {
    await worker.terminate();
  }
  return 0;
}

main(process.argv.slice(2)).then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(String(err && err.stack ? err.stack : err) + '\n');
    process.exit(2);
  },
);
