/**
 * Session state machine, kept free of DOM and network concerns so the
 * transition rules are directly testable.  One active task per session;
 * the server stays the source of truth and every rejection keeps the
 * annotator's answers intact.
 */

import type { Answers, Progress, Protocol, Task } from "./types.js";

export type Phase = "idle" | "loading" | "task" | "submitting" | "done" | "error";

export interface Session {
  annotator: string;
  phase: Phase;
  protocol: Protocol;
  task: Task | null;
  progress: Progress | null;
  answers: Answers;
  /** Tasks this annotator finished in this browser session. */
  labeled: number;
  /** Rejection, validation, or connectivity message to surface. */
  notice: string | null;
  /** Question id to visually flag as needing attention. */
  attention: string | null;
  /** What a retry should redo after a network failure. */
  pendingAction: "load" | "submit" | null;
}

export function startSession(annotator: string, protocol: Protocol): Session {
  const name = annotator.trim();
  if (!name) {
    throw new Error("annotator name must be non-empty");
  }
  return {
    annotator: name,
    phase: "loading",
    protocol,
    task: null,
    progress: null,
    answers: {},
    labeled: 0,
    notice: null,
    attention: null,
    pendingAction: "load",
  };
}

export function taskLoaded(
  session: Session,
  payload: { task: Task; progress: Progress } | null,
): Session {
  if (payload === null) {
    return { ...session, phase: "done", task: null, answers: {}, notice: null,
             attention: null, pendingAction: null };
  }
  return {
    ...session,
    phase: "task",
    task: payload.task,
    progress: payload.progress,
    answers: {},
    notice: null,
    attention: null,
    pendingAction: null,
  };
}

/** Record one answer; options outside the protocol are a programming error. */
export function setAnswer(session: Session, questionId: string, option: string): Session {
  const question = session.protocol.questions.find((q) => q.id === questionId);
  if (!question) {
    throw new Error(`unknown question ${questionId}`);
  }
  if (!question.options.includes(option)) {
    throw new Error(`option ${option} is not offered for ${questionId}`);
  }
  return {
    ...session,
    answers: { ...session.answers, [questionId]: option },
    // Answering the flagged question clears the flag.
    attention: session.attention === questionId ? null : session.attention,
    notice: session.attention === questionId ? null : session.notice,
  };
}

/** Question ids still lacking an answer, in protocol order. */
export function missingQuestions(protocol: Protocol, answers: Answers): string[] {
  return protocol.questions.filter((q) => !(q.id in answers)).map((q) => q.id);
}

export function submitBlocked(session: Session): boolean {
  return missingQuestions(session.protocol, session.answers).length > 0;
}

/** Move to submitting, or flag the first unanswered question. */
export function beginSubmit(session: Session): Session {
  const missing = missingQuestions(session.protocol, session.answers);
  if (missing.length > 0) {
    return {
      ...session,
      phase: "task",
      notice: `please answer every question (${missing.length} remaining)`,
      attention: missing[0],
    };
  }
  return { ...session, phase: "submitting", notice: null, attention: null };
}

/** Service said no (409 duplicate, 422 invalid, ...): stay put, keep answers. */
export function submitRejected(session: Session, status: number, message: string): Session {
  return {
    ...session,
    phase: "task",
    notice: `submission rejected (${status}): ${message}`,
    attention: null,
    pendingAction: null,
  };
}

export function submitAccepted(session: Session, progress: Progress): Session {
  return {
    ...session,
    phase: "loading",
    progress,
    task: null,
    answers: {},
    labeled: session.labeled + 1,
    notice: null,
    attention: null,
    pendingAction: "load",
  };
}

/** Connectivity trouble: preserve the form, remember what to retry. */
export function networkFailure(
  session: Session,
  action: "load" | "submit",
  message: string,
): Session {
  return {
    ...session,
    phase: "error",
    notice: `connection problem: ${message}`,
    pendingAction: action,
  };
}

export function retrying(session: Session): Session {
  return {
    ...session,
    phase: session.pendingAction === "submit" ? "submitting" : "loading",
    notice: null,
  };
}
