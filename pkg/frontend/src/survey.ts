/**
 * Best-Only trial wizard: one prompt, one radio group, one submit per page.
 *
 * There is deliberately no second "least important" column and no back
 * navigation: the service records the first answer per screen and the
 * screen only advances after its choice POST is acknowledged (204, or 409
 * when a retry finds the answer already recorded).
 */

import { ScreenPayload, ServiceClient, TrialOption } from "./api.js";

export interface TrialView {
  prompt: string;
  options: TrialOption[];
  selected: string | null;
  progress: { current: number; total: number };
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class SurveyApp {
  private sessionId = "";
  private totalScreens = 0;
  private view: TrialView | null = null;
  private screenIndex = 0;
  private submitting = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ServiceClient,
    private readonly studyId: string,
    private readonly attributes: Record<string, string> = {},
  ) {}

  /** Open a session and show its first trial. */
  async start(): Promise<void> {
    this.renderMessage("Loading the survey…");
    let handle;
    try {
      handle = await this.client.openSession(this.studyId, this.attributes);
    } catch (error) {
      this.renderFailure(String(error instanceof Error ? error.message : error));
      return;
    }
    this.sessionId = handle.sessionId;
    this.totalScreens = handle.totalScreens;
    await this.advance();
  }

  /** Fetch the screen at the cursor and render it (or the completion page). */
  private async advance(): Promise<void> {
    let result;
    try {
      result = await this.client.fetchScreen(this.sessionId);
    } catch (error) {
      this.renderFailure(String(error instanceof Error ? error.message : error));
      return;
    }
    if (result.kind === "completed") {
      this.renderCompleted();
      return;
    }
    const screen = result.screen;
    if (screen.options.length === 0) {
      this.renderFailure("This survey screen has no options; nothing was submitted.");
      return;
    }
    this.screenIndex = screen.screen_index;
    this.view = {
      prompt: screen.prompt,
      options: screen.options,
      selected: null,
      progress: { current: screen.screen_index + 1, total: this.totalScreens },
    };
    this.submitting = false;
    this.renderTrial("Submit answer", null);
  }

  private async submit(): Promise<void> {
    const view = this.view;
    if (!view || view.selected === null || this.submitting) {
      return;
    }
    this.submitting = true;
    this.setControlsDisabled(true);
    let status: number;
    try {
      status = await this.client.submitChoice(
        this.sessionId,
        this.screenIndex,
        view.selected,
      );
    } catch {
      // Network failure: keep the selection, offer a retry.
      this.submitting = false;
      this.renderTrial("Retry", "We could not reach the survey. Your selection was kept; please retry.");
      return;
    }
    if (status === 204 || status === 409) {
      // 409 after a retry means the answer is already recorded: success.
      await this.advance();
      return;
    }
    this.submitting = false;
    this.renderTrial(
      "Submit answer",
      `The survey could not accept this answer (HTTP ${status}). Your selection was kept.`,
    );
  }

  // -- rendering ----------------------------------------------------------

  private renderTrial(submitLabel: string, errorText: string | null): void {
    const view = this.view;
    if (!view) return;
    this.root.replaceChildren();

    const main = el("main", "trial");
    main.append(
      el(
        "p",
        "progress",
        `Question ${view.progress.current} of ${view.progress.total}`,
      ),
    );

    const group = el("fieldset", "options");
    group.setAttribute("role", "radiogroup");
    const legend = el("legend", "prompt", view.prompt);
    group.append(legend);

    for (const option of view.options) {
      // A wrapping label makes the option's accessible name the full
      // readable text: label plus description.
      const label = el("label", "option");
      const input = el("input");
      input.type = "radio";
      input.name = "choice";
      input.value = option.id;
      input.checked = view.selected === option.id;
      input.addEventListener("change", () => {
        view.selected = option.id;
        this.setControlsDisabled(false);
      });
      label.append(
        input,
        el("span", "option-label", option.label),
        el("span", "option-description", option.description),
      );
      group.append(label);
    }
    main.append(group);

    const submit = el("button", "submit", submitLabel);
    submit.type = "button";
    submit.disabled = view.selected === null || this.submitting;
    submit.addEventListener("click", () => void this.submit());
    main.append(submit);

    const alert = el("p", "error", errorText ?? "");
    alert.setAttribute("role", "alert");
    alert.hidden = errorText === null;
    main.append(alert);

    this.root.append(main);
  }

  private setControlsDisabled(disabled: boolean): void {
    const submit = this.root.querySelector<HTMLButtonElement>("button.submit");
    if (submit) {
      submit.disabled = disabled || this.view?.selected == null;
    }
  }

  private renderCompleted(): void {
    this.root.replaceChildren();
    const main = el("main", "completed");
    main.append(el("h1", undefined, "All done — thank you!"));
    main.append(
      el(
        "p",
        undefined,
        `Your ${this.totalScreens} answers were recorded. You can close this page.`,
      ),
    );
    this.root.append(main);
  }

  private renderFailure(message: string): void {
    this.root.replaceChildren();
    const main = el("main", "failed");
    const alert = el("p", "error", message);
    alert.setAttribute("role", "alert");
    main.append(alert);
    this.root.append(main);
  }

  private renderMessage(message: string): void {
    this.root.replaceChildren(el("p", "status", message));
  }
}
