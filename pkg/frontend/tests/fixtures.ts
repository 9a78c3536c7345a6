import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

const here = dirname(fileURLToPath(import.meta.url));

export function recorded(name: string): unknown {
  const path = join(here, 'fixtures', 'recorded', `${name}.json`);
  return JSON.parse(readFileSync(path, 'utf-8'));
}
