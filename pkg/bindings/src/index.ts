/**
 * Streaming bindings over the spatialprompt pipeline.
 *
 * The four operations (openDataset, build, iterPrompts, exportCorpus) drive
 * the core through its command-line and file interfaces; no ranking or
 * prompt logic lives here. Records stream one at a time so corpora of any
 * size can feed a training loop.
 */
import { copyFile, mkdtemp, rm, readFile } from 'node:fs/promises';
import { createReadStream } from 'node:fs';
import { tmpdir } from 'node:os';
import { extname, join } from 'node:path';
import { createInterface } from 'node:readline';

import { checkCoreVersion, runCore } from './core.js';
import { CoreError } from './errors.js';

export { CoreError } from './errors.js';
export { CORE_VERSION } from './core.js';

export type SplitName = 'train' | 'validation' | 'test';

export interface MetricConfig {
    expressionMetric?: 'cosine' | 'pearson' | 'negative_euclidean';
    spatialMetric?: 'euclidean' | 'l1' | 'cosine_distance';
    neighborScope?: 'within_sample' | 'global';
    asinhCofactor?: number;
}

export interface PromptConfig {
    k?: number;
    negativeWindow?: [number, number];
    task?: 'cell_type' | 'status' | 'multi_task';
    templateVersion?: string;
    includeNegative?: boolean;
    seed?: number;
    truncate?: number;
    fractions?: [number, number, number];
    stratifyBy?: 'none' | 'cell_type' | 'sample';
    splitFile?: string;
}

/** One corpus record, field-identical to a line of the exported file. */
export interface PromptRecord {
    format_version: string;
    anchor_cell_id: string;
    polarity: 'positive' | 'negative';
    task: string;
    prompt_text: string;
    neighbor_ids: { spatial: string[]; expression: string[] };
    target_text: string;
    labels: { cell_type: string; status: string };
    split: SplitName;
    template_version: string;
}

export interface DatasetSummary {
    n_cells: number;
    n_samples: number;
    panel_size: number;
    type_vocabulary: string[];
    status_vocabulary: string[];
    dataset_checksum: string;
}

export interface CorpusManifest {
    format_version: string;
    template_version: string;
    counts: {
        records: number;
        by_split: Record<string, number>;
        by_polarity: Record<string, number>;
        by_task: Record<string, number>;
    };
    dataset_checksum: string;
    [key: string]: unknown;
}

function manifestPathFor(corpusPath: string): string {
    const ext = extname(corpusPath);
    const stem = ext ? corpusPath.slice(0, -ext.length) : corpusPath;
    return `${stem}.manifest.json`;
}

export class DatasetHandle {
    readonly path: string;
    readonly summary: DatasetSummary;
    private closed = false;

    private constructor(path: string, summary: DatasetSummary) {
        this.path = path;
        this.summary = summary;
    }

    /** Validate a dataset directory (cells.tsv + panel.txt) via the core. */
    static async open(path: string): Promise<DatasetHandle> {
        await checkCoreVersion();
        const stdout = await runCore(['ingest', '--dataset', path]);
        return new DatasetHandle(path, JSON.parse(stdout) as DatasetSummary);
    }

    ensureOpen(): void {
        if (this.closed) {
            throw new CoreError('closed', `dataset handle for ${this.path} is closed`);
        }
    }

    async close(): Promise<void> {
        this.closed = true;
    }
}

export class CorpusHandle {
    readonly corpusPath: string;
    readonly manifest: CorpusManifest;
    private readonly workDir: string | null;
    private closed = false;

    constructor(corpusPath: string, manifest: CorpusManifest, workDir: string | null = null) {
        this.corpusPath = corpusPath;
        this.manifest = manifest;
        this.workDir = workDir;
    }

    private ensureOpen(): void {
        if (this.closed) {
            throw new CoreError('closed', `corpus handle for ${this.corpusPath} is closed`);
        }
    }

    /** Stream records in file order, optionally restricted to one split. */
    async *iterPrompts(split?: SplitName): AsyncGenerator<PromptRecord, void, void> {
        this.ensureOpen();
        const reader = createInterface({
            input: createReadStream(this.corpusPath, { encoding: 'utf-8' }),
            crlfDelay: Infinity,
        });
        for await (const line of reader) {
            if (!line.trim()) continue;
            const record = JSON.parse(line) as PromptRecord;
            if (split === undefined || record.split === split) {
                yield record;
            }
        }
    }

    /** Copy the corpus and its manifest to `destPath`; bytes are exactly the
     * core's output, so checksums match the CLI run that produced them. */
    async exportTo(destPath: string): Promise<CorpusManifest> {
        this.ensureOpen();
        await copyFile(this.corpusPath, destPath);
        await copyFile(manifestPathFor(this.corpusPath), manifestPathFor(destPath));
        const raw = await readFile(manifestPathFor(destPath), 'utf-8');
        return JSON.parse(raw) as CorpusManifest;
    }

    /** Release the working directory; later calls report a closed handle. */
    async close(): Promise<void> {
        if (!this.closed && this.workDir) {
            await rm(this.workDir, { recursive: true, force: true });
        }
        this.closed = true;
    }
}

function promptArgs(dataset: DatasetHandle, metric: MetricConfig, prompt: PromptConfig, out: string): string[] {
    const args = ['prompts', '--dataset', dataset.path, '--out', out];
    if (metric.expressionMetric) args.push('--expression-metric', metric.expressionMetric);
    if (metric.spatialMetric) args.push('--spatial-metric', metric.spatialMetric);
    if (metric.neighborScope) args.push('--scope', metric.neighborScope);
    if (metric.asinhCofactor !== undefined) args.push('--asinh-cofactor', String(metric.asinhCofactor));
    if (prompt.k !== undefined) args.push('--k', String(prompt.k));
    if (prompt.negativeWindow) args.push('--negative-window', prompt.negativeWindow.join('-'));
    if (prompt.task) args.push('--task', prompt.task);
    if (prompt.templateVersion) args.push('--template', prompt.templateVersion);
    if (prompt.includeNegative === false) args.push('--no-include-negative');
    if (prompt.seed !== undefined) args.push('--seed', String(prompt.seed));
    if (prompt.truncate !== undefined) args.push('--truncate', String(prompt.truncate));
    if (prompt.fractions) args.push('--fractions', prompt.fractions.join(','));
    if (prompt.stratifyBy) args.push('--stratify', prompt.stratifyBy);
    if (prompt.splitFile) args.push('--split-file', prompt.splitFile);
    return args;
}

/** Open (and validate) a dataset directory. */
export async function openDataset(path: string): Promise<DatasetHandle> {
    return DatasetHandle.open(path);
}

/** Build a prompt corpus from an open dataset; the result owns a temp
 * directory until closed. */
export async function build(
    dataset: DatasetHandle,
    metric: MetricConfig = {},
    prompt: PromptConfig = {},
): Promise<CorpusHandle> {
    dataset.ensureOpen();
    const workDir = await mkdtemp(join(tmpdir(), 'spatialprompt-'));
    const corpusPath = join(workDir, 'corpus.jsonl');
    await runCore(promptArgs(dataset, metric, prompt, corpusPath));
    const manifest = JSON.parse(
        await readFile(manifestPathFor(corpusPath), 'utf-8'),
    ) as CorpusManifest;
    return new CorpusHandle(corpusPath, manifest, workDir);
}

/** Stream prompt records from a built corpus. */
export function iterPrompts(
    corpus: CorpusHandle,
    split?: SplitName,
): AsyncGenerator<PromptRecord, void, void> {
    return corpus.iterPrompts(split);
}

/** Export a built corpus (and manifest) to a destination path. */
export async function exportCorpus(corpus: CorpusHandle, destPath: string): Promise<CorpusManifest> {
    return corpus.exportTo(destPath);
}
