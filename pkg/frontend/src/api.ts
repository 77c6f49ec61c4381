/** Thin typed client for the study service HTTP contract. */

export interface TrialOption {
  id: string;
  label: string;
  description: string;
}

export interface ScreenPayload {
  screen_index: number;
  prompt: string;
  options: TrialOption[];
}

export interface SessionHandle {
  sessionId: string;
  totalScreens: number;
}

export type ScreenResult =
  | { kind: "screen"; screen: ScreenPayload }
  | { kind: "completed" };

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  async openSession(
    studyId: string,
    attributes: Record<string, string>,
  ): Promise<SessionHandle> {
    const response = await fetch(
      `${this.baseUrl}/studies/${encodeURIComponent(studyId)}/sessions`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ attributes }),
      },
    );
    if (!response.ok) {
      throw new Error(`could not open a session (HTTP ${response.status})`);
    }
    const body = await response.json();
    return { sessionId: body.session_id, totalScreens: body.total_screens };
  }

  async fetchScreen(sessionId: string): Promise<ScreenResult> {
    const response = await fetch(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/screen`,
    );
    if (!response.ok) {
      throw new Error(`could not load the next screen (HTTP ${response.status})`);
    }
    const body = await response.json();
    if (body.completed) {
      return { kind: "completed" };
    }
    return { kind: "screen", screen: body as ScreenPayload };
  }

  /**
   * Submit the best pick for one screen. Resolves to the HTTP status so the
   * caller can treat 409 (already recorded) as success after a retry;
   * network failures reject.
   */
  async submitChoice(
    sessionId: string,
    screenIndex: number,
    best: string,
  ): Promise<number> {
    const response = await fetch(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/choices`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ screen_index: screenIndex, best }),
      },
    );
    return response.status;
  }
}
