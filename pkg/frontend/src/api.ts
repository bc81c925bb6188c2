export type Speaker = 'C' | 'T';

export interface ModelInfo {
    window: number;
    labels: string[];
}

export interface Health {
    status: string;
    models: Record<string, ModelInfo>;
}

export interface UtteranceReply {
    session_id: string;
    index: number;
    code: string | null;
    distribution: Record<string, number> | null;
}

export interface ForecastEntry {
    code: string;
    p: number;
}

export interface ForecastReply {
    session_id: string;
    speaker: Speaker;
    k: number;
    top: ForecastEntry[];
    warning: boolean;
}

export interface TranscriptEntry {
    speaker: Speaker;
    text: string;
    code: string | null;
}

export interface Transcript {
    session_id: string;
    utterances: TranscriptEntry[];
}

export class ServiceError extends Error {
    status: number;

    constructor(status: number, message: string) {
        super(message);
        this.status = status;
    }
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client; every number the console shows comes from here. */
export class ServiceClient {
    private baseUrl: string;
    private fetchFn: FetchFn;

    constructor(baseUrl: string, fetchFn?: FetchFn) {
        this.baseUrl = baseUrl.replace(/\/$/, '');
        this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
    }

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const init: RequestInit = { method };
        if (body !== undefined) {
            init.body = JSON.stringify(body);
            init.headers = { 'Content-Type': 'application/json' };
        }
        const response = await this.fetchFn(this.baseUrl + path, init);
        const payload = await response.json().catch(() => ({}));
        if (!response.ok) {
            const detail = (payload as { error?: string }).error ?? response.statusText;
            throw new ServiceError(response.status, detail);
        }
        return payload as T;
    }

    health(): Promise<Health> {
        return this.request<Health>('GET', '/healthz');
    }

    createSession(sessionId?: string): Promise<{ session_id: string }> {
        const body = sessionId === undefined ? {} : { session_id: sessionId };
        return this.request('POST', '/sessions', body);
    }

    transcript(sessionId: string): Promise<Transcript> {
        return this.request('GET', `/sessions/${encodeURIComponent(sessionId)}`);
    }

    addUtterance(sessionId: string, speaker: Speaker, text: string): Promise<UtteranceReply> {
        return this.request('POST', `/sessions/${encodeURIComponent(sessionId)}/utterances`, {
            speaker,
            text,
        });
    }

    forecast(sessionId: string, speaker: Speaker, k: number): Promise<ForecastReply> {
        const path = `/sessions/${encodeURIComponent(sessionId)}/forecast?speaker=${speaker}&k=${k}`;
        return this.request('GET', path);
    }

    cloneSession(sessionId: string): Promise<{ session_id: string }> {
        return this.request('POST', `/sessions/${encodeURIComponent(sessionId)}/clone`, {});
    }
}
