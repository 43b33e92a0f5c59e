/** Client-side scenario queue: one request in flight, the rest wait in order. */

export interface QueueStatus {
    running: boolean;
    waiting: number;
}

export class ScenarioQueue<T> {
    private readonly pending: T[] = [];
    private running = false;

    constructor(
        private readonly run: (item: T) => Promise<void>,
        private readonly onStatus: (status: QueueStatus) => void = () => {},
    ) {}

    submit(item: T): void {
        this.pending.push(item);
        void this.pump();
    }

    private async pump(): Promise<void> {
        if (this.running) {
            this.onStatus({ running: true, waiting: this.pending.length });
            return;
        }
        this.running = true;
        while (this.pending.length) {
            const item = this.pending.shift() as T;
            this.onStatus({ running: true, waiting: this.pending.length });
            try {
                await this.run(item);
            } catch {
                // errors are surfaced by the runner; the queue keeps draining
            }
        }
        this.running = false;
        this.onStatus({ running: false, waiting: 0 });
    }
}
