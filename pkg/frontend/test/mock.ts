import { FetchFn, Speaker } from '../src/api.js';

interface StoredUtterance {
    speaker: Speaker;
    text: string;
    code: string | null;
}

export interface ReplayEvent {
    type: 'session' | 'utterance' | 'clone' | 'forecast';
    session: string;
    [key: string]: unknown;
}

const CLIENT_LABELS = ['Fn', 'Ct', 'St'];
const THERAPIST_LABELS = ['Fa', 'Res', 'Rec', 'Gi', 'Quc', 'Quo', 'Mia', 'Min'];

/** Deterministic keyword coder standing in for the real models. */
function codeOf(speaker: Speaker, text: string): string {
    const t = text.toLowerCase();
    if (speaker === 'C') {
        if (t.includes('want') || t.includes('change') || t.includes('quit')) return 'Ct';
        if (t.includes('never') || t.includes('not a problem')) return 'St';
        return 'Fn';
    }
    if (t.includes('should') || t.includes('have to')) return 'Min';
    if (t.includes('?')) return t.includes('what') || t.includes('how') ? 'Quo' : 'Quc';
    if (t.includes('sounds like') || t.includes('you feel')) return 'Res';
    return 'Fa';
}

/** Forecast rule: a sustain-talk client turn pulls Min into the top-3. */
function forecastOf(lastText: string, speaker: Speaker): { code: string; p: number }[] {
    if (speaker === 'C') {
        return [
            { code: 'Fn', p: 0.61 },
            { code: 'Ct', p: 0.24 },
            { code: 'St', p: 0.11 },
        ];
    }
    if (codeOf('C', lastText) === 'St') {
        return [
            { code: 'Res', p: 0.41 },
            { code: 'Min', p: 0.27 },
            { code: 'Fa', p: 0.18 },
        ];
    }
    return [
        { code: 'Fa', p: 0.44 },
        { code: 'Quo', p: 0.21 },
        { code: 'Res', p: 0.17 },
    ];
}

function distributionFor(speaker: Speaker, code: string): Record<string, number> {
    const labels = speaker === 'C' ? CLIENT_LABELS : THERAPIST_LABELS;
    const rest = 0.2 / (labels.length - 1);
    const dist: Record<string, number> = {};
    for (const label of labels) {
        dist[label] = label === code ? 0.8 : rest;
    }
    return dist;
}

/** In-memory stand-in for the observer service with the same routes,
 * status codes, and replay-log semantics. */
export class MockService {
    sessions = new Map<string, StoredUtterance[]>();
    replay: ReplayEvent[] = [];
    private counter = 0;

    get fetchFn(): FetchFn {
        return (url, init) => Promise.resolve(this.dispatch(url, init));
    }

    utteranceEvents(session: string): ReplayEvent[] {
        return this.replay.filter(e => e.type === 'utterance' && e.session === session);
    }

    private reply(status: number, payload: unknown): Response {
        const body = JSON.stringify(payload);
        return {
            ok: status >= 200 && status < 300,
            status,
            statusText: String(status),
            json: () => Promise.resolve(JSON.parse(body)),
        } as unknown as Response;
    }

    private dispatch(url: string, init?: RequestInit): Response {
        const parsed = new URL(url);
        const path = parsed.pathname;
        const method = init?.method ?? 'GET';
        const body = init?.body ? JSON.parse(String(init.body)) : {};

        if (method === 'GET' && path === '/healthz') {
            return this.reply(200, {
                status: 'ok',
                models: {
                    'categorize:client': { window: 4, labels: CLIENT_LABELS },
                    'categorize:therapist': { window: 4, labels: THERAPIST_LABELS },
                    'forecast:therapist': { window: 4, labels: THERAPIST_LABELS },
                    'forecast:client': { window: 4, labels: CLIENT_LABELS },
                },
            });
        }

        if (method === 'POST' && path === '/sessions') {
            let id = body.session_id as string | undefined;
            if (id === undefined) {
                this.counter += 1;
                id = `s-${String(this.counter).padStart(4, '0')}`;
            } else if (this.sessions.has(id)) {
                return this.reply(409, { error: 'duplicate session' });
            }
            this.sessions.set(id, []);
            this.replay.push({ type: 'session', session: id });
            return this.reply(201, { session_id: id });
        }

        let match = path.match(/^\/sessions\/([A-Za-z0-9._-]+)\/utterances$/);
        if (method === 'POST' && match) {
            const store = this.sessions.get(match[1]);
            if (!store) return this.reply(404, { error: 'no session' });
            const speaker = body.speaker as Speaker;
            const text = body.text as string;
            if (speaker !== 'C' && speaker !== 'T') {
                return this.reply(422, { error: 'bad speaker' });
            }
            const code = codeOf(speaker, text);
            store.push({ speaker, text, code });
            this.replay.push({
                type: 'utterance', session: match[1], speaker, text, code,
            });
            return this.reply(200, {
                session_id: match[1],
                index: store.length - 1,
                code,
                distribution: distributionFor(speaker, code),
            });
        }

        match = path.match(/^\/sessions\/([A-Za-z0-9._-]+)\/forecast$/);
        if (method === 'GET' && match) {
            const store = this.sessions.get(match[1]);
            if (!store) return this.reply(404, { error: 'no session' });
            if (store.length === 0) return this.reply(422, { error: 'empty session' });
            const speaker = parsed.searchParams.get('speaker') as Speaker;
            const k = Number(parsed.searchParams.get('k') ?? '3');
            const top = forecastOf(store[store.length - 1].text, speaker).slice(0, k);
            const warning = top.some(e => e.code === 'Min');
            this.replay.push({
                type: 'forecast', session: match[1], speaker, k, warning,
            });
            return this.reply(200, {
                session_id: match[1], speaker, k, top, warning,
            });
        }

        match = path.match(/^\/sessions\/([A-Za-z0-9._-]+)\/clone$/);
        if (method === 'POST' && match) {
            const store = this.sessions.get(match[1]);
            if (!store) return this.reply(404, { error: 'no session' });
            this.counter += 1;
            const id = `s-${String(this.counter).padStart(4, '0')}`;
            this.sessions.set(id, store.map(u => ({ ...u })));
            this.replay.push({ type: 'clone', session: id, from: match[1] });
            return this.reply(201, { session_id: id });
        }

        match = path.match(/^\/sessions\/([A-Za-z0-9._-]+)$/);
        if (method === 'GET' && match) {
            const store = this.sessions.get(match[1]);
            if (!store) return this.reply(404, { error: 'no session' });
            return this.reply(200, { session_id: match[1], utterances: store });
        }

        return this.reply(404, { error: `no route ${method} ${path}` });
    }
}
