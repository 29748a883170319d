// End-to-end drive of the real UI against a live service process: the flow a
// browser automation run would exercise, executed in jsdom with real HTTP.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ApiClient } from "../src/api.js";
import { WorkerApp } from "../src/app.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO = join(HERE, "..", "..");
const ADMIN_TOKEN = "e2e-admin-token";
const PORT = 18000 + Math.floor(Math.random() * 2000);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess;

interface BankQuestion { id: string; prompt: string; options: string[]; answer_index: number }
interface Bank { tests: { test_id: string; questions: BankQuestion[] }[] }

const bank: Bank = JSON.parse(readFileSync(
  join(REPO, "src", "crowdlocate", "data", "qualification_tests.json"), "utf-8"));

async function until(check: () => boolean, what: string, timeoutMs = 20000): Promise<void> {
  const start = Date.now();
  while (Date.now() - start < timeoutMs) {
    if (check()) return;
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error(`timed out waiting for ${what}\n---\n${document.body.innerHTML}`);
}

function click(selector: string): void {
  const node = document.querySelector<HTMLElement>(selector);
  if (!node) throw new Error(`no element ${selector}\n---\n${document.body.innerHTML}`);
  node.click();
}

function setRadio(selector: string): void {
  const node = document.querySelector<HTMLInputElement>(selector);
  if (!node) throw new Error(`no radio ${selector}`);
  node.checked = true;
  node.dispatchEvent(new Event("change", { bubbles: true }));
}

function setText(selector: string, value: string): void {
  const node = document.querySelector<HTMLTextAreaElement | HTMLInputElement>(selector);
  if (!node) throw new Error(`no input ${selector}`);
  node.value = value;
  node.dispatchEvent(new Event("input", { bubbles: true }));
}

function text(selector: string): string {
  return document.querySelector(selector)?.textContent ?? "";
}

async function adminCsv(): Promise<string> {
  const res = await fetch(`${BASE}/admin/export.csv`, {
    headers: { "X-Admin-Token": ADMIN_TOKEN },
  });
  return res.text();
}

beforeAll(async () => {
  const store = mkdtempSync(join(tmpdir(), "crowdlocate-e2e-"));
  service = spawn("python3", [
    "-m", "crowdlocate.cli", "serve",
    "--port", String(PORT), "--k", "2", "--seed", "11", "--store", store,
  ], {
    cwd: REPO,
    env: { ...process.env, CROWDLOCATE_ADMIN_TOKEN: ADMIN_TOKEN },
    stdio: ["ignore", "pipe", "pipe"],
  });
  const start = Date.now();
  for (;;) {
    try {
      const res = await fetch(`${BASE}/`);
      if (res.ok) break;
    } catch {
      /* not up yet */
    }
    if (Date.now() - start > 30000) throw new Error("service did not start");
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
});

afterAll(() => {
  service?.kill();
});

async function freshApp(): Promise<{ app: WorkerApp; api: ApiClient }> {
  window.localStorage.clear();
  document.body.innerHTML = '<main id="app"></main>';
  const api = new ApiClient(BASE);
  const app = new WorkerApp(document.getElementById("app") as HTMLElement, api);
  await app.start();
  return { app, api };
}

async function runConsentAndDemographics(): Promise<void> {
  await until(() => document.querySelector("#consent-box") !== null, "consent screen");
  const consent = document.querySelector<HTMLInputElement>("#consent-box")!;
  consent.checked = true;
  consent.dispatchEvent(new Event("change", { bubbles: true }));
  click("#consent-continue");
  await until(() => document.querySelector("#demo-age") !== null, "demographics form");
  setText("#demo-age", "29");
  setText("#demo-country", "USA");
  setText("#demo-yoe", "7");
  setText("#demo-languages", "Java, Python");
  click("#demo-continue");
  await until(() => document.querySelector("#qualification") !== null, "qualification test");
}

function answerQualification(correct: number): void {
  // the served test hides answers; look the prompts up in the bundled bank
  const legends = Array.from(document.querySelectorAll("#qualification legend"))
    .map((node) => node.textContent ?? "");
  legends.forEach((legend, qi) => {
    let pick = 0;
    for (const test of bank.tests) {
      for (const q of test.questions) {
        if (legend.includes(q.prompt)) {
          pick = qi < correct ? q.answer_index : (q.answer_index + 1) % q.options.length;
        }
      }
    }
    setRadio(`#qual-${qi}-${pick}`);
  });
  click("#qual-submit");
}

async function answerOneQuestion(option: "yes" | "no" | "idk"): Promise<void> {
  await until(() => document.querySelector("#answer-options") !== null, "question screen");
  const optionIndex = option === "idk" ? 0 : option === "yes" ? 1 : 2;
  setRadio(`#option-${optionIndex}`);
  if (option !== "idk") setRadio("#confidence-4");
  setText("#explanation", `the ${option} case: checked the highlighted fragment`);
  await until(() => document.querySelector("#submit-answer:not([disabled])") !== null,
    "submit enabled");
  click("#submit-answer");
  await until(() => document.querySelector("#difficulty") !== null, "difficulty follow-up");
  click("#difficulty-3");
}

describe("worker UI end to end", () => {
  it("completes consent, demographics, qualification 5/5, three answers, and a valid code", async () => {
    await freshApp();
    await runConsentAndDemographics();
    answerQualification(5);
    await until(() => document.querySelector("#answer-options") !== null, "first question");

    // required labels, progress, and panels
    const labels = Array.from(document.querySelectorAll("#answer-options label"))
      .map((l) => (l.textContent ?? "").trim());
    expect(labels).toEqual([
      "I don't know", "Yes, there is an issue", "No, there is not an issue"]);
    expect(text("#progress-label")).toBe("1/3");
    expect(text("#failing-test").length).toBeGreaterThan(0);
    expect(text("#failure-message").length).toBeGreaterThan(0);
    expect(document.querySelectorAll("#source-pane .line").length).toBeGreaterThan(5);
    expect(document.querySelectorAll("#source-pane .line.bright").length).toBeGreaterThan(0);

    // submit stays disabled until the form is complete
    expect(document.querySelector("#submit-answer")?.hasAttribute("disabled")).toBe(true);

    await answerOneQuestion("idk");   // IDK path: confidence disabled, sent as 0
    await answerOneQuestion("yes");
    await answerOneQuestion("no");

    await until(() => document.querySelector("#feedback") !== null, "feedback screen");
    setText("#feedback", "clear instructions");
    click("#finish");
    await until(() => document.querySelector("#completion-code") !== null, "completion code");
    const code = text("#completion-code").trim();
    expect(code).toMatch(/^[A-Z0-9]{10}$/);

    const validate = await fetch(`${BASE}/codes/validate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ code }),
    });
    expect((await validate.json()).valid).toBe(true);
    const again = await fetch(`${BASE}/codes/validate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ code }),
    });
    expect((await again.json()).valid).toBe(false);

    // the IDK answer reached the store with confidence 0
    const csv = await adminCsv();
    const idkRows = csv.split("\n").filter((line) => line.includes("IDK"));
    expect(idkRows.length).toBe(1);
    expect(idkRows[0].split(",")[7]).toBe("0");
  });

  it("IDK selection disables the confidence control in the form", async () => {
    await freshApp();
    await runConsentAndDemographics();
    answerQualification(5);
    await until(() => document.querySelector("#answer-options") !== null, "question screen");
    setRadio("#option-0");
    await until(() => document.querySelector("#confidence-1")?.hasAttribute("disabled") === true,
      "confidence disabled");
    setRadio("#option-2");
    await until(() => document.querySelector("#confidence-1")?.hasAttribute("disabled") === false,
      "confidence re-enabled");
  });

  it("failing the qualification shows a terminal screen with no questions", async () => {
    await freshApp();
    await runConsentAndDemographics();
    answerQualification(2);
    await until(() => document.body.textContent?.includes("Not qualified") === true,
      "not-qualified screen");
    expect(document.querySelector("#answer-options")).toBeNull();
  });

  it("quitting posts the reason", async () => {
    await freshApp();
    await runConsentAndDemographics();
    answerQualification(5);
    await until(() => document.querySelector("#quit-button") !== null, "quit control");
    click("#quit-button");
    await until(() => document.querySelector("#quit-reasons") !== null, "reason picker");
    click('button[data-reason="too difficult"]');
    await until(() => document.body.textContent?.includes("Session ended") === true,
      "quit confirmation");
    const progress = await fetch(`${BASE}/admin/progress`, {
      headers: { "X-Admin-Token": ADMIN_TOKEN },
    });
    const body = await progress.json();
    expect(body.assignment_states.quit).toBeGreaterThanOrEqual(1);
  });

  it("worker-facing payloads never mention fault ground truth", async () => {
    await freshApp();
    await runConsentAndDemographics();
    answerQualification(5);
    await until(() => document.querySelector("#answer-options") !== null, "question screen");
    const api = new ApiClient(BASE);
    // fetch the raw payloads the app consumed and scan the wire format
    const next = await fetch(`${BASE}/session/next`, {
      headers: { "X-Worker-Token": window.localStorage.getItem("crowdlocate_token") ?? "" },
    });
    const nextBody = await next.text();
    expect(nextBody).not.toContain("covers_fault");
    expect(nextBody).not.toContain("fault_lines");
    expect(document.body.innerHTML).not.toContain("covers_fault");
    void api;
  });

  it("empty explanation keeps submit disabled and no request is sent", async () => {
    await freshApp();
    await runConsentAndDemographics();
    answerQualification(5);
    await until(() => document.querySelector("#answer-options") !== null, "question screen");
    setRadio("#option-2");
    setRadio("#confidence-3");
    setText("#explanation", "   ");
    expect(document.querySelector("#submit-answer")?.hasAttribute("disabled")).toBe(true);
  });
});
