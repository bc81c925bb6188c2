import {
    ForecastEntry,
    Health,
    ServiceClient,
    ServiceError,
    Speaker,
} from './api.js';

interface Entry {
    speaker: Speaker;
    text: string;
    code: string | null;
    confidence: number | null;
}

const TOP_K = 3;
const WARN_CODE = 'Min';

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

/** Live session console: transcript with code chips, a speaker toggle,
 * top-3 forecast suggestions with a warning banner, and a what-if
 * preview that runs drafts through a server-side session clone.
 * All codes and probabilities come from service responses. */
export class SessionConsole {
    private root: HTMLElement;
    private client: ServiceClient;

    sessionId: string | null = null;
    connected = false;
    nextSpeaker: Speaker = 'C';
    entries: Entry[] = [];
    forecast: ForecastEntry[] = [];
    forecastWarning = false;
    forecastNote = '';
    previewCode: string | null = null;
    /** Promise of the most recent button-triggered action; await it to
     * observe the settled UI after a click. */
    lastAction: Promise<unknown> | null = null;
    private health: Health | null = null;

    constructor(root: HTMLElement, client: ServiceClient) {
        this.root = root;
        this.client = client;
    }

    async start(): Promise<void> {
        try {
            this.health = await this.client.health();
            const created = await this.client.createSession();
            this.sessionId = created.session_id;
            this.connected = true;
        } catch (error) {
            console.error('service unreachable:', error);
            this.connected = false;
        }
        if (this.connected) {
            await this.refreshForecast();
        }
        this.render();
    }

    /** The widest history window among loaded models. */
    windowSize(): number {
        if (!this.health) return 0;
        let widest = 0;
        for (const info of Object.values(this.health.models)) {
            widest = Math.max(widest, info.window);
        }
        return widest;
    }

    async submit(text: string): Promise<void> {
        const trimmed = text.trim();
        if (!this.connected || !this.sessionId || trimmed === '') return;
        const speaker = this.nextSpeaker;
        try {
            const reply = await this.client.addUtterance(this.sessionId, speaker, trimmed);
            this.entries.push({
                speaker,
                text: trimmed,
                code: reply.code,
                confidence:
                    reply.code !== null && reply.distribution !== null
                        ? reply.distribution[reply.code]
                        : null,
            });
            this.previewCode = null;
            this.nextSpeaker = speaker === 'C' ? 'T' : 'C';
            await this.refreshForecast();
        } catch (error) {
            this.handleFailure(error);
        }
        this.render();
    }

    async setNextSpeaker(speaker: Speaker): Promise<void> {
        if (speaker === this.nextSpeaker) return;
        this.nextSpeaker = speaker;
        await this.refreshForecast();
        this.render();
    }

    /** Re-query the top-3 forecast for the selected next speaker.
     * A read-only call: the session itself never changes here. */
    async refreshForecast(): Promise<void> {
        this.forecast = [];
        this.forecastWarning = false;
        this.forecastNote = '';
        if (!this.connected || !this.sessionId) return;
        if (this.entries.length === 0) {
            this.forecastNote = 'no history yet';
            return;
        }
        try {
            const reply = await this.client.forecast(this.sessionId, this.nextSpeaker, TOP_K);
            this.forecast = reply.top;
            this.forecastWarning = reply.warning;
        } catch (error) {
            if (error instanceof ServiceError) {
                this.forecastNote =
                    error.status === 409 ? 'no forecast model for this speaker' : error.message;
            } else {
                this.handleFailure(error);
            }
        }
    }

    /** What-if: run a draft through a clone of the session and report the
     * code it would receive. The real session is never touched. */
    async preview(text: string): Promise<string | null> {
        const trimmed = text.trim();
        if (!this.connected || !this.sessionId || trimmed === '') return null;
        try {
            const clone = await this.client.cloneSession(this.sessionId);
            const reply = await this.client.addUtterance(
                clone.session_id,
                this.nextSpeaker,
                trimmed
            );
            this.previewCode = reply.code;
            this.render();
            return reply.code;
        } catch (error) {
            this.handleFailure(error);
            this.render();
            return null;
        }
    }

    discardPreview(): void {
        this.previewCode = null;
        this.render();
    }

    private handleFailure(error: unknown): void {
        if (error instanceof ServiceError) {
            console.error('service rejected the request:', error.message);
            return;
        }
        console.error('connection lost:', error);
        this.connected = false;
    }

    render(): void {
        this.root.textContent = '';
        this.root.appendChild(this.renderBanner());
        this.root.appendChild(this.renderStatus());
        this.root.appendChild(this.renderTranscript());
        this.root.appendChild(this.renderWindowIndicator());
        this.root.appendChild(this.renderSuggestions());
        this.root.appendChild(this.renderControls());
    }

    private renderBanner(): HTMLElement {
        const banner = el('div', 'warning-banner');
        banner.dataset.visible = String(this.forecastWarning);
        if (this.forecastWarning) {
            banner.textContent =
                `${WARN_CODE} is among the likely next therapist behaviors - ` +
                'consider a different response';
        }
        return banner;
    }

    private renderStatus(): HTMLElement {
        const status = el('div', 'status');
        status.dataset.connected = String(this.connected);
        status.textContent = this.connected
            ? `session ${this.sessionId}`
            : 'service unreachable - input disabled';
        return status;
    }

    private renderTranscript(): HTMLElement {
        const pane = el('div', 'transcript');
        for (const entry of this.entries) {
            const row = el('div', 'utterance');
            row.dataset.speaker = entry.speaker;
            row.appendChild(el('span', 'speaker', entry.speaker));
            row.appendChild(el('span', 'text', entry.text));
            const chip = el('span', 'chip');
            if (entry.code === null) {
                chip.dataset.code = '';
                chip.textContent = '?';
            } else {
                chip.dataset.code = entry.code;
                chip.textContent =
                    entry.confidence === null
                        ? entry.code
                        : `${entry.code} ${entry.confidence.toFixed(2)}`;
            }
            row.appendChild(chip);
            pane.appendChild(row);
        }
        return pane;
    }

    private renderWindowIndicator(): HTMLElement {
        const n = this.windowSize();
        const seen = Math.min(n, this.entries.length);
        const note = el('div', 'window-indicator');
        note.textContent = `model sees the last ${seen} of ${this.entries.length} utterances`;
        return note;
    }

    private renderSuggestions(): HTMLElement {
        const panel = el('div', 'suggestions');
        panel.appendChild(el('div', 'suggestions-title',
            `likely next codes for ${this.nextSpeaker}`));
        if (this.forecast.length === 0) {
            panel.appendChild(el('div', 'suggestions-empty', this.forecastNote));
            return panel;
        }
        for (const entry of this.forecast) {
            const row = el('div', 'suggestion');
            row.dataset.code = entry.code;
            row.appendChild(el('span', 'code', entry.code));
            row.appendChild(el('span', 'prob', entry.p.toFixed(3)));
            panel.appendChild(row);
        }
        return panel;
    }

    private renderControls(): HTMLElement {
        const controls = el('div', 'controls');

        const toggle = el('div', 'speaker-toggle');
        for (const speaker of ['C', 'T'] as Speaker[]) {
            const button = el('button', 'speaker-choice', speaker);
            button.dataset.speaker = speaker;
            button.dataset.selected = String(speaker === this.nextSpeaker);
            button.disabled = !this.connected;
            button.addEventListener('click', () => {
                this.lastAction = this.setNextSpeaker(speaker);
            });
            toggle.appendChild(button);
        }
        controls.appendChild(toggle);

        const input = el('input', 'draft');
        input.placeholder = 'next utterance';
        input.disabled = !this.connected;
        controls.appendChild(input);

        const submit = el('button', 'submit', 'say');
        submit.disabled = !this.connected;
        submit.addEventListener('click', () => {
            const text = input.value;
            input.value = '';
            this.lastAction = this.submit(text);
        });
        controls.appendChild(submit);

        const preview = el('button', 'preview', 'what if?');
        preview.disabled = !this.connected;
        preview.addEventListener('click', () => {
            this.lastAction = this.preview(input.value);
        });
        controls.appendChild(preview);

        const previewBox = el('div', 'preview-result');
        previewBox.dataset.visible = String(this.previewCode !== null);
        if (this.previewCode !== null) {
            previewBox.appendChild(el('span', 'preview-label', 'draft would be coded '));
            const chip = el('span', 'chip', this.previewCode);
            chip.dataset.code = this.previewCode;
            previewBox.appendChild(chip);
            const discard = el('button', 'discard', 'discard');
            discard.addEventListener('click', () => this.discardPreview());
            previewBox.appendChild(discard);
        }
        controls.appendChild(previewBox);

        return controls;
    }
}
