/**
 * DOM wiring for the reviewer app.  All rendering is a pure function of
 * the Session object; events produce a new session and re-render.
 */

import { ApiError, type Client } from "./api.js";
import { fieldOrder, segmentField, spansForPane, type Pane } from "./highlight.js";
import {
  beginSubmit,
  networkFailure,
  retrying,
  setAnswer,
  startSession,
  submitAccepted,
  submitBlocked,
  submitRejected,
  taskLoaded,
  type Session,
} from "./state.js";
import type { Protocol, Task } from "./types.js";

const KIND_CLASS: Record<string, string> = {
  removed: "hl-removed",
  added: "hl-added",
  incorrect_attribute: "hl-incorrect",
};

type Attrs = Record<string, string | boolean | ((event: Event) => void)>;

function el(tag: string, attrs: Attrs = {}, children: (Node | string)[] = []): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key, value);
    } else if (typeof value === "boolean") {
      if (value) {
        node.setAttribute(key, "");
      }
    } else {
      node.setAttribute(key, value);
    }
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function renderPane(task: Task, field: string, pane: Pane): HTMLElement {
  const text = (pane === "original" ? task.original_fields : task.synthetic_fields)[field] ?? "";
  const spans = spansForPane(task.diff, field, pane);
  const body = el("div", { class: "pane-text" });
  for (const segment of segmentField(text, spans)) {
    if (segment.kind === null) {
      body.append(segment.text);
    } else {
      body.append(el("mark", { class: KIND_CLASS[segment.kind] }, [segment.text]));
    }
  }
  return body;
}

function renderValueHeader(task: Task): HTMLElement {
  const rows: HTMLElement[] = [
    el("span", { class: "meta" }, [`${task.category} / ${task.attribute_key}`]),
  ];
  if (task.strategy === "incorrect" && task.negative_value) {
    // A conflict was planted: the reviewer needs to see both sides of it.
    rows.push(el("span", { class: "value-correct" }, [`correct: ${task.original_value}`]));
    rows.push(el("span", { class: "value-wrong" }, [`wrong: ${task.negative_value}`]));
  } else {
    rows.push(el("span", { class: "value-correct" }, [`current: ${task.original_value}`]));
    if (task.strategy === "correct") {
      rows.push(el("span", { class: "value-target" }, [`target: ${task.new_value}`]));
    }
  }
  return el("div", { class: "value-header" }, rows);
}

function renderTaskView(session: Session, task: Task, app: App): HTMLElement {
  const fields = fieldOrder(task.original_fields, task.synthetic_fields);
  const grid = el("div", { class: "panes" }, [
    el("h3", {}, ["original"]),
    el("h3", {}, ["synthetic"]),
  ]);
  for (const field of fields) {
    grid.append(el("div", { class: "field-label" }, [field]));
    grid.append(el("div", { class: "field-label" }, [""]));
    grid.append(renderPane(task, field, "original"));
    grid.append(renderPane(task, field, "synthetic"));
  }
  return el("section", { class: "task" }, [
    el("h2", {}, [`task ${task.task_id}`]),
    renderValueHeader(task),
    el("div", { class: "legend" }, [
      el("mark", { class: "hl-removed" }, ["removed"]),
      el("mark", { class: "hl-added" }, ["added"]),
      el("mark", { class: "hl-incorrect" }, ["planted conflict"]),
    ]),
    grid,
    renderForm(session, app),
  ]);
}

function renderForm(session: Session, app: App): HTMLElement {
  const form = el("form", {
    class: "questions",
    submit: (event) => {
      event.preventDefault();
    },
  });
  for (const question of session.protocol.questions) {
    const flagged = session.attention === question.id;
    const fieldset = el("fieldset", { class: flagged ? "needs-answer" : "" }, [
      el("legend", {}, [question.text]),
    ]);
    for (const option of question.options) {
      const input = el("input", {
        type: "radio",
        name: question.id,
        value: option,
        change: () => app.answer(question.id, option),
      }) as HTMLInputElement;
      input.checked = session.answers[question.id] === option;
      fieldset.append(el("label", { class: "option" }, [input, option.replace(/_/g, " ")]));
    }
    form.append(fieldset);
  }
  if (session.notice) {
    form.append(el("p", { class: "notice", role: "alert" }, [session.notice]));
  }
  form.append(
    el("button", {
      type: "button",
      class: "submit",
      disabled: submitBlocked(session) || session.phase === "submitting",
      click: () => void app.submit(),
    }, [session.phase === "submitting" ? "submitting..." : "submit answers"]),
  );
  return form;
}

function renderProgress(session: Session): HTMLElement {
  const total = session.progress?.tasks ?? 0;
  const line = total
    ? `you labeled ${session.labeled} this session, ` +
      `${session.progress?.fully_labeled ?? 0}/${total} tasks fully covered`
    : `you labeled ${session.labeled} this session`;
  return el("div", { class: "progress" }, [
    el("span", {}, [`reviewer: ${session.annotator}`]),
    el("span", {}, [line]),
  ]);
}

export interface App {
  start(annotator: string): Promise<void>;
  answer(questionId: string, option: string): void;
  submit(): Promise<void>;
  retry(): Promise<void>;
  readonly session: Session | null;
}

class AppImpl implements App {
  session: Session | null = null;
  private protocol: Protocol | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: Client,
  ) {}

  async init(): Promise<void> {
    try {
      this.protocol = await this.client.fetchProtocol();
    } catch (err) {
      this.root.replaceChildren(
        el("p", { class: "notice" }, [`cannot reach the annotation service: ${String(err)}`]),
      );
      return;
    }
    this.renderNameGate();
  }

  private renderNameGate(): void {
    const input = el("input", {
      type: "text",
      placeholder: "your reviewer name",
      autofocus: true,
    }) as HTMLInputElement;
    const begin = () => {
      if (input.value.trim()) {
        void this.start(input.value);
      }
    };
    input.addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter") {
        begin();
      }
    });
    this.root.replaceChildren(
      el("section", { class: "gate" }, [
        el("h1", {}, ["listing review"]),
        this.preambleBox(),
        input,
        el("button", { click: begin }, ["start"]),
      ]),
    );
  }

  private preambleBox(): HTMLElement {
    const text = this.protocol?.preamble ??
      "Review each pair of listings and answer every question.";
    return el("details", { class: "preamble", open: true }, [
      el("summary", {}, ["what to do"]),
      el("p", {}, [text]),
    ]);
  }

  async start(annotator: string): Promise<void> {
    this.session = startSession(annotator, this.protocol!);
    this.render();
    await this.loadNext();
  }

  answer(questionId: string, option: string): void {
    if (this.session) {
      this.session = setAnswer(this.session, questionId, option);
      this.render();
    }
  }

  async submit(): Promise<void> {
    if (!this.session || !this.session.task) {
      return;
    }
    this.session = beginSubmit(this.session);
    this.render();
    if (this.session.phase !== "submitting") {
      return; // validation flagged a question
    }
    const { annotator, task, answers } = this.session;
    try {
      const progress = await this.client.submitLabel(annotator, task!.task_id, answers);
      this.session = submitAccepted(this.session, progress);
      this.render();
      await this.loadNext();
    } catch (err) {
      this.session = err instanceof ApiError
        ? submitRejected(this.session, err.status, err.message)
        : networkFailure(this.session, "submit", String(err));
      this.render();
    }
  }

  async retry(): Promise<void> {
    if (!this.session) {
      return;
    }
    const action = this.session.pendingAction ?? "load";
    this.session = retrying(this.session);
    this.render();
    if (action === "submit") {
      await this.submit();
    } else {
      await this.loadNext();
    }
  }

  private async loadNext(): Promise<void> {
    if (!this.session) {
      return;
    }
    try {
      const payload = await this.client.nextTask(this.session.annotator);
      this.session = taskLoaded(this.session, payload);
    } catch (err) {
      this.session = networkFailure(this.session, "load", String(err));
    }
    this.render();
  }

  private render(): void {
    const session = this.session;
    if (!session) {
      return;
    }
    const children: HTMLElement[] = [renderProgress(session)];
    if (session.labeled === 0) {
      children.push(this.preambleBox());
    }
    switch (session.phase) {
      case "loading":
        children.push(el("p", { class: "status" }, ["fetching the next task..."]));
        break;
      case "task":
      case "submitting":
        children.push(renderTaskView(session, session.task!, this));
        break;
      case "done":
        children.push(
          el("section", { class: "completion" }, [
            el("h2", {}, ["all done"]),
            el("p", {}, [
              `no tasks left for you. you labeled ${session.labeled} ` +
              `task${session.labeled === 1 ? "" : "s"} this session.`,
            ]),
          ]),
        );
        break;
      case "error":
        if (session.task) {
          children.push(renderTaskView(session, session.task, this));
        }
        children.push(
          el("div", { class: "retry-banner", role: "alert" }, [
            el("span", {}, [session.notice ?? "connection problem"]),
            el("button", { click: () => void this.retry() }, ["retry"]),
          ]),
        );
        break;
      case "idle":
        break;
    }
    this.root.replaceChildren(...children);
  }
}

export function createApp(root: HTMLElement, client: Client): App {
  const app = new AppImpl(root, client);
  void app.init();
  return app;
}
