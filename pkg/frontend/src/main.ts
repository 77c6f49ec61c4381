import { ServiceClient } from "./api.js";
import { SurveyApp } from "./survey.js";

export interface AppConfig {
  baseUrl: string;
  studyId: string | null;
  attributes: Record<string, string>;
}

/** `?study=<id>&base=<service url>`; any other parameter becomes a session attribute. */
export function parseConfig(search: string, origin: string): AppConfig {
  const params = new URLSearchParams(search);
  const attributes: Record<string, string> = {};
  for (const [key, value] of params) {
    if (key !== "study" && key !== "base") {
      attributes[key] = value;
    }
  }
  return {
    baseUrl: params.get("base") ?? origin,
    studyId: params.get("study"),
    attributes,
  };
}

export function mount(root: HTMLElement): void {
  const config = parseConfig(window.location.search, window.location.origin);
  if (!config.studyId) {
    root.textContent = "Missing ?study=<id> in the page address.";
    return;
  }
  const app = new SurveyApp(
    root,
    new ServiceClient(config.baseUrl),
    config.studyId,
    config.attributes,
  );
  void app.start();
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    mount(root);
  }
}
