import { execFile } from 'node:child_process';
import { promisify } from 'node:util';

import { CoreError } from './errors.js';

const execFileAsync = promisify(execFile);

/** Must match the core library version exactly; checked at handle open. */
export const CORE_VERSION = '0.1.0';

function coreBinary(): { bin: string; prefix: string[] } {
    const override = process.env.SPATIALPROMPT_BIN;
    if (override) {
        const [bin, ...prefix] = override.split(' ');
        return { bin, prefix };
    }
    return { bin: 'spatialprompt', prefix: [] };
}

/** Run one core subcommand; stdout is returned, stderr errors are re-thrown
 * with the core's own code and message. */
export async function runCore(args: string[]): Promise<string> {
    const { bin, prefix } = coreBinary();
    try {
        const { stdout } = await execFileAsync(bin, [...prefix, ...args], {
            maxBuffer: 1 << 26,
        });
        return stdout;
    } catch (err) {
        const failure = err as { stderr?: string; code?: string | number; message: string };
        const lines = (failure.stderr ?? '').split('\n').filter((l) => l.trim().length > 0);
        for (const line of lines.reverse()) {
            try {
                const payload = JSON.parse(line) as { error?: { code: string; message: string } };
                if (payload.error) {
                    throw new CoreError(payload.error.code, payload.error.message);
                }
            } catch (parseErr) {
                if (parseErr instanceof CoreError) throw parseErr;
            }
        }
        if (failure.code === 'ENOENT') {
            throw new CoreError(
                'missing-core',
                `core executable not found (${bin}); install the spatialprompt package or set SPATIALPROMPT_BIN`,
            );
        }
        throw new CoreError('core', failure.message);
    }
}

export async function checkCoreVersion(): Promise<string> {
    const version = (await runCore(['--version'])).trim();
    if (version !== CORE_VERSION) {
        throw new CoreError(
            'version',
            `core version ${version} does not match bindings version ${CORE_VERSION}`,
        );
    }
    return version;
}
