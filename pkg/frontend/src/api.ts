// Typed client for the crowdlocate worker HTTP API. The UI talks to the
// service exclusively through this module, always with the session token
// header; no other state leaves the browser.

export interface SourceLine {
  line: number;
  text: string;
}

export interface ContextMethod {
  name: string;
  highlight_line: number;
  source: string;
}

export interface QuestionPayload {
  assignment_id: string;
  question_id: string;
  question_text: string;
  options: string[];
  progress: { answered: number; of: number };
  failing_test: string;
  failure_message: string;
  source_lines: SourceLine[];
  highlight: { bright: number[]; secondary: number[] };
  context_methods: ContextMethod[];
  confidence_scale: number[];
  explanation_required: boolean;
}

export interface QualificationTest {
  test_id: string;
  questions: { id: string; prompt: string; options: string[] }[];
}

export interface NextAssignment {
  status: "assigned" | "active" | "done";
  assignment_id?: string;
  answered?: number;
  of?: number;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

export class NetworkError extends Error {}

export class ApiClient {
  private token: string | null = null;

  constructor(private base: string = "") {
    this.token = window.localStorage.getItem("crowdlocate_token");
  }

  hasSession(): boolean {
    return this.token !== null;
  }

  clearSession(): void {
    this.token = null;
    window.localStorage.removeItem("crowdlocate_token");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-Worker-Token"] = this.token;
    let response: Response;
    try {
      response = await fetch(this.base + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = (await response.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async createSession(): Promise<void> {
    const out = await this.request<{ token: string }>("POST", "/session", { consent: true });
    this.token = out.token;
    window.localStorage.setItem("crowdlocate_token", out.token);
  }

  submitDemographics(form: Record<string, unknown>): Promise<{ ok: boolean }> {
    return this.request("POST", "/session/demographics", form);
  }

  getQualification(): Promise<QualificationTest> {
    return this.request("GET", "/session/qualification");
  }

  submitQualification(testId: string, responses: number[]): Promise<{ score: number; passed: boolean }> {
    return this.request("POST", "/session/qualification", {
      test_id: testId,
      responses,
    });
  }

  nextAssignment(): Promise<NextAssignment> {
    return this.request("GET", "/session/next");
  }

  getQuestion(assignmentId: string): Promise<QuestionPayload> {
    return this.request("GET", `/assignment/${assignmentId}/question`);
  }

  submitAnswer(assignmentId: string, payload: {
    question_id: string;
    option: string;
    confidence: number;
    explanation: string;
  }): Promise<{ answer_id: string }> {
    return this.request("POST", `/assignment/${assignmentId}/answer`, payload);
  }

  submitDifficulty(assignmentId: string, difficulty: number): Promise<{ ok: boolean }> {
    return this.request("POST", `/assignment/${assignmentId}/difficulty`, { difficulty });
  }

  quit(assignmentId: string, reason: string): Promise<{ ok: boolean }> {
    return this.request("POST", `/assignment/${assignmentId}/quit`, { reason });
  }

  complete(assignmentId: string, feedback: string): Promise<{ completion_code: string }> {
    return this.request("POST", `/assignment/${assignmentId}/complete`, { feedback });
  }
}
