/** Error raised by the core pipeline, surfaced with its code and message
 * intact, plus binding-level failures (closed handles, version skew). */
export class CoreError extends Error {
    readonly code: string;

    constructor(code: string, message: string) {
        super(message);
        this.name = 'CoreError';
        this.code = code;
    }
}
