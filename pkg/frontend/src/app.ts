// Worker-facing single-page flow: consent, demographics, qualification test,
// three code questions (each followed by a difficulty rating), feedback, and
// the completion code. All progress lives server-side behind the session
// token, so a refresh resumes where the worker left off.

import {
  ApiClient,
  ApiError,
  NetworkError,
  QualificationTest,
  QuestionPayload,
} from "./api.js";

export const QUIT_REASONS = ["too long", "too difficult", "too boring", "other"] as const;

const PROFESSIONS = [
  "hobbyist",
  "professional developer",
  "undergraduate student",
  "graduate student",
  "other",
] as const;

const PROFESSION_VALUES: Record<string, string> = {
  hobbyist: "hobbyist",
  "professional developer": "professional",
  "undergraduate student": "undergraduate",
  "graduate student": "graduate",
  other: "other",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export class WorkerApp {
  constructor(private root: HTMLElement, private api: ApiClient) {}

  async start(): Promise<void> {
    if (this.api.hasSession()) {
      await this.stepNext();
    } else {
      this.stepConsent();
    }
  }

  private show(...children: (Node | string)[]): void {
    this.root.replaceChildren(...children);
  }

  private terminal(title: string, message: string): void {
    this.show(
      el("div", { class: "panel terminal" },
        el("h2", {}, title),
        el("p", {}, message)),
    );
  }

  private withRetry(run: () => Promise<void>, onNetworkError: () => void): Promise<void> {
    return run().catch((err) => {
      if (err instanceof NetworkError) {
        onNetworkError();
        return;
      }
      if (err instanceof ApiError && err.status === 410) {
        this.terminal("Assignment expired",
          "This assignment passed its two-hour limit. Thank you for your time.");
        return;
      }
      throw err;
    });
  }

  // ---- step 1: consent -------------------------------------------------
  private stepConsent(): void {
    const agree = el("input", { type: "checkbox", id: "consent-box" });
    const button = el("button", { id: "consent-continue", disabled: "" }, "Continue");
    agree.addEventListener("change", () => {
      if (agree.checked) button.removeAttribute("disabled");
      else button.setAttribute("disabled", "");
    });
    button.addEventListener("click", () => {
      void this.withRetry(async () => {
        await this.api.createSession();
        this.stepDemographics();
      }, () => this.stepConsent());
    });
    this.show(
      el("div", { class: "panel" },
        el("h2", {}, "Study description and consent"),
        el("p", {},
          "You will answer short questions about fragments of a Java method " +
          "that fails a test. Your answers are recorded anonymously and " +
          "aggregated with those of other participants."),
        el("label", { for: "consent-box" }, agree, " I have read the description and consent to participate."),
        button),
    );
  }

  // ---- step 2: demographics --------------------------------------------
  private stepDemographics(): void {
    const age = el("input", { type: "number", id: "demo-age", min: "18", max: "99", value: "" });
    const gender = this.select("demo-gender", ["female", "male", "other"]);
    const country = el("input", { type: "text", id: "demo-country", value: "" });
    const yoe = el("input", { type: "number", id: "demo-yoe", min: "0", max: "60", value: "" });
    const profession = this.select("demo-profession", [...PROFESSIONS]);
    const learned = this.select("demo-learned", ["university", "high school", "books", "the web"]);
    const languages = el("input", { type: "text", id: "demo-languages", value: "" });
    const button = el("button", { id: "demo-continue" }, "Continue");
    button.addEventListener("click", () => {
      void this.withRetry(async () => {
        await this.api.submitDemographics({
          age: Number(age.value) || null,
          gender: gender.value,
          country: country.value,
          years_of_experience: Number(yoe.value) || 0,
          profession: PROFESSION_VALUES[profession.value],
          learned_at: learned.value,
          languages: languages.value.split(",").map((s) => s.trim()).filter(Boolean),
        });
        await this.stepQualification();
      }, () => { /* inputs stay mounted; the worker just clicks again */ });
    });
    this.show(
      el("div", { class: "panel" },
        el("h2", {}, "About you"),
        this.field("Age", age),
        this.field("Gender", gender),
        this.field("Country of residence", country),
        this.field("Years of programming experience", yoe),
        this.field("Profession", profession),
        this.field("Where did you learn to program?", learned),
        this.field("Programming languages (comma separated)", languages),
        button),
    );
  }

  // ---- step 3: qualification test ----------------------------------------
  private async stepQualification(): Promise<void> {
    await this.withRetry(async () => {
      const test = await this.api.getQualification();
      this.renderQualification(test);
    }, () => void this.stepQualification());
  }

  private renderQualification(test: QualificationTest): void {
    const form = el("div", { class: "panel", id: "qualification" },
      el("h2", {}, "Qualification test"),
      el("p", {}, "Answer at least three of the five questions correctly to qualify."));
    test.questions.forEach((q, qi) => {
      const block = el("fieldset", { class: "qual-question" },
        el("legend", {}, `${qi + 1}. ${q.prompt}`));
      q.options.forEach((option, oi) => {
        const input = el("input", {
          type: "radio",
          name: `qual-${qi}`,
          value: String(oi),
          id: `qual-${qi}-${oi}`,
        });
        block.append(el("label", { for: `qual-${qi}-${oi}` }, input, ` ${option}`));
      });
      form.append(block);
    });
    const button = el("button", { id: "qual-submit" }, "Submit test");
    button.addEventListener("click", () => {
      const responses: number[] = [];
      for (let qi = 0; qi < test.questions.length; qi++) {
        const checked = this.root.querySelector<HTMLInputElement>(
          `input[name="qual-${qi}"]:checked`);
        responses.push(checked ? Number(checked.value) : -1);
      }
      void this.withRetry(async () => {
        const grade = await this.api.submitQualification(test.test_id, responses);
        if (grade.passed) {
          await this.stepNext();
        } else {
          this.terminal("Not qualified",
            `You answered ${grade.score} of 5 correctly; at least 3 are required. ` +
            "Thank you for your interest.");
        }
      }, () => { /* leave the filled form in place for retry */ });
    });
    form.append(button);
    this.show(form);
  }

  // ---- step 4: question loop ----------------------------------------------
  private async stepNext(): Promise<void> {
    await this.withRetry(async () => {
      const next = await this.api.nextAssignment();
      if (next.status === "done") {
        this.terminal("All done", "There are no more tasks available for you. Thank you!");
        return;
      }
      const assignmentId = next.assignment_id as string;
      if ((next.answered ?? 0) >= (next.of ?? 3)) {
        this.stepFeedback(assignmentId);
        return;
      }
      await this.stepQuestion(assignmentId);
    }, () => void this.stepNext());
  }

  private async stepQuestion(assignmentId: string): Promise<void> {
    await this.withRetry(async () => {
      const payload = await this.api.getQuestion(assignmentId);
      this.renderQuestion(assignmentId, payload);
    }, () => void this.stepQuestion(assignmentId));
  }

  renderQuestion(assignmentId: string, payload: QuestionPayload): void {
    const total = payload.progress.of;
    const current = payload.progress.answered + 1;
    const header = el("div", { class: "progress" },
      el("span", { id: "progress-label" }, `${current}/${total}`),
      this.quitControl(assignmentId));

    const testPanel = el("div", { class: "panel context" },
      el("h3", {}, "We ran the following test:"),
      el("pre", { id: "failing-test" }, payload.failing_test),
      el("h3", {}, "But we received this failure:"),
      el("pre", { id: "failure-message" }, payload.failure_message));

    const options = payload.options;
    const optionInputs: HTMLInputElement[] = [];
    const optionsBox = el("div", { class: "options", id: "answer-options" });
    options.forEach((label, i) => {
      const input = el("input", {
        type: "radio", name: "answer-option", id: `option-${i}`, value: label,
      });
      optionInputs.push(input);
      optionsBox.append(el("label", { for: `option-${i}` }, input, ` ${label}`));
    });

    const confidenceBox = el("div", { class: "confidence", id: "confidence" },
      el("span", {}, "How confident are you in your answer? "));
    const confidenceInputs: HTMLInputElement[] = [];
    for (const level of payload.confidence_scale) {
      const input = el("input", {
        type: "radio", name: "confidence", id: `confidence-${level}`, value: String(level),
      });
      confidenceInputs.push(input);
      confidenceBox.append(el("label", { for: `confidence-${level}` }, input, ` ${level}`));
    }

    const explanation = el("textarea", {
      id: "explanation", rows: "3", placeholder: "Please provide an explanation",
    });
    const validation = el("div", { class: "validation", id: "validation" });
    const submit = el("button", { id: "submit-answer", disabled: "" }, "Submit");

    const isIdk = () => optionInputs[0]?.checked === true;
    const refresh = () => {
      const optionChosen = optionInputs.some((i) => i.checked);
      const confidenceChosen = confidenceInputs.some((i) => i.checked);
      for (const input of confidenceInputs) {
        if (isIdk()) input.setAttribute("disabled", "");
        else input.removeAttribute("disabled");
      }
      const ready = optionChosen && (isIdk() || confidenceChosen) &&
        explanation.value.trim().length > 0;
      if (ready) submit.removeAttribute("disabled");
      else submit.setAttribute("disabled", "");
    };
    optionInputs.forEach((i) => i.addEventListener("change", refresh));
    confidenceInputs.forEach((i) => i.addEventListener("change", refresh));
    explanation.addEventListener("input", refresh);

    submit.addEventListener("click", () => {
      if (explanation.value.trim().length === 0) {
        validation.textContent = "An explanation is required.";
        return;
      }
      const chosen = optionInputs.find((i) => i.checked);
      if (!chosen) return;
      const option = chosen.id === "option-0" ? "IDK"
        : chosen.id === "option-1" ? "YES" : "NO";
      const confidence = isIdk()
        ? 0
        : Number(confidenceInputs.find((i) => i.checked)?.value ?? 0);
      void this.withRetry(async () => {
        await this.api.submitAnswer(assignmentId, {
          question_id: payload.question_id,
          option,
          confidence,
          explanation: explanation.value.trim(),
        });
        this.renderDifficulty(assignmentId, current, total);
      }, () => {
        validation.textContent = "Network problem; your input is preserved. Try again.";
      });
    });

    const secondary = new Set(payload.highlight.secondary);
    const bright = new Set(payload.highlight.bright);
    const sourcePane = el("div", { class: "source", id: "source-pane" },
      el("h3", {}, "The source code:"));
    for (const line of payload.source_lines) {
      const cls = bright.has(line.line) ? "line bright"
        : secondary.has(line.line) ? "line secondary" : "line";
      sourcePane.append(
        el("div", { class: cls, "data-line": String(line.line) },
          el("span", { class: "ln" }, String(line.line)),
          el("span", { class: "code" }, line.text)));
    }
    for (const ctx of payload.context_methods) {
      sourcePane.append(
        el("details", { class: "context-method" },
          el("summary", {}, `Related method: ${ctx.name}`),
          el("pre", {}, ctx.source)));
    }

    this.show(
      header,
      testPanel,
      el("div", { class: "panel question" },
        el("h3", { id: "question-text" }, payload.question_text),
        optionsBox, confidenceBox,
        this.field("Please provide an explanation:", explanation),
        validation, submit),
      sourcePane,
    );
  }

  private renderDifficulty(assignmentId: string, current: number, total: number): void {
    const box = el("div", { class: "panel", id: "difficulty" },
      el("h3", {}, "How difficult was this question?"));
    for (let level = 1; level <= 5; level++) {
      const button = el("button", { class: "difficulty-level", id: `difficulty-${level}` },
        String(level));
      button.addEventListener("click", () => {
        void this.withRetry(async () => {
          await this.api.submitDifficulty(assignmentId, level);
          if (current >= total) this.stepFeedback(assignmentId);
          else await this.stepQuestion(assignmentId);
        }, () => { /* keep the rating screen for retry */ });
      });
      box.append(button);
    }
    box.append(el("p", { class: "hint" }, "1 = low difficulty, 5 = high difficulty"));
    this.show(box);
  }

  // ---- step 5: feedback and completion -------------------------------------
  private stepFeedback(assignmentId: string): void {
    const feedback = el("textarea", { id: "feedback", rows: "4", placeholder: "Any feedback for us?" });
    const button = el("button", { id: "finish" }, "Finish and get completion code");
    button.addEventListener("click", () => {
      void this.withRetry(async () => {
        const out = await this.api.complete(assignmentId, feedback.value.trim());
        this.renderCompletion(out.completion_code);
      }, () => { /* feedback text preserved for retry */ });
    });
    this.show(
      el("div", { class: "panel" },
        el("h2", {}, "Almost done"),
        this.field("Feedback (optional)", feedback),
        button),
    );
  }

  private renderCompletion(code: string): void {
    const more = el("button", { id: "another-hit" }, "Take another task");
    more.addEventListener("click", () => void this.stepNext());
    this.show(
      el("div", { class: "panel terminal" },
        el("h2", {}, "Task complete"),
        el("p", {}, "Enter this completion code where you accepted the task:"),
        el("pre", { id: "completion-code" }, code),
        more),
    );
  }

  // ---- shared widgets ------------------------------------------------------
  private quitControl(assignmentId: string): HTMLElement {
    const wrap = el("span", { class: "quit" });
    const quit = el("button", { id: "quit-button" }, "Quit");
    quit.addEventListener("click", () => {
      const picker = el("span", { class: "quit-reasons", id: "quit-reasons" }, "Why? ");
      for (const reason of QUIT_REASONS) {
        const pick = el("button", { class: "quit-reason", "data-reason": reason }, reason);
        pick.addEventListener("click", () => {
          void this.withRetry(async () => {
            await this.api.quit(assignmentId, reason);
            this.terminal("Session ended", "Your reason was recorded. Thank you for your time.");
          }, () => { /* picker remains for retry */ });
        });
        picker.append(pick);
      }
      wrap.replaceChildren(picker);
    });
    wrap.append(quit);
    return wrap;
  }

  private select(id: string, options: string[]): HTMLSelectElement {
    const node = el("select", { id });
    for (const option of options) {
      node.append(el("option", { value: option }, option));
    }
    return node;
  }

  private field(label: string, control: HTMLElement): HTMLElement {
    return el("div", { class: "field" }, el("label", {}, label), control);
  }
}
