/** The writing surface: editor with anchored highlights, a margin of
 * comment cards, a thread pane, a query box, and instrumentation.
 *
 * Every mutation flows through the optimistic-versioned edit endpoint as
 * an explicit edit batch; the UI holds no document state the server
 * cannot reproduce. Highlight offsets always come from server spans.
 */

import { ApiClient, ApiError } from "./api.js";
import { backdropSegments, lastAiComment, statusLabel, threadById } from "./state.js";
import { extractSuggestion } from "./suggestion.js";
import { computeEdits, scalarLength } from "./text.js";
import type { PasteSource, SessionView, ThreadJson } from "./types.js";

interface AppOptions {
  autoTick?: boolean;
  documentRef?: Document;
}

export class App {
  view: SessionView | null = null;
  openThreadId: string | null = null;
  conflict = false;
  lastError: string | null = null;

  private readonly doc: Document;
  private ticker: ReturnType<typeof setInterval> | null = null;
  private lastCopy: { text: string; source: PasteSource } | null = null;

  readonly queryInput: HTMLInputElement;
  readonly queryButton: HTMLButtonElement;
  readonly textarea: HTMLTextAreaElement;
  readonly backdrop: HTMLElement;
  readonly cards: HTMLElement;
  readonly threadPane: HTMLElement;
  readonly toast: HTMLElement;
  readonly conflictDialog: HTMLElement;

  constructor(
    readonly root: HTMLElement,
    readonly client: ApiClient,
    readonly sessionId: string,
    private readonly options: AppOptions = {},
  ) {
    this.doc = options.documentRef ?? root.ownerDocument;
    root.classList.add("marginalia-app");
    root.innerHTML = `
      <header class="topbar">
        <input class="query-input" type="text"
               placeholder="Ask for feedback across the whole document" />
        <button class="query-send">Ask</button>
        <button class="sync-now">Sync</button>
        <span class="head-version"></span>
      </header>
      <main class="workspace">
        <div class="editor">
          <div class="backdrop" aria-hidden="true"></div>
          <textarea class="doc" spellcheck="false"></textarea>
        </div>
        <aside class="margin">
          <h2>AI comments</h2>
          <div class="cards"></div>
        </aside>
      </main>
      <section class="thread-pane" hidden></section>
      <div class="toast" hidden></div>
      <div class="conflict-dialog" hidden>
        <p>The document changed on the server while you were editing.
           Your text is untouched; reload to pick up the server version
           or keep editing and sync again.</p>
        <button class="conflict-reload">Reload server version</button>
        <button class="conflict-dismiss">Keep my text</button>
      </div>`;

    this.queryInput = root.querySelector(".query-input") as HTMLInputElement;
    this.queryButton = root.querySelector(".query-send") as HTMLButtonElement;
    this.textarea = root.querySelector(".doc") as HTMLTextAreaElement;
    this.backdrop = root.querySelector(".backdrop") as HTMLElement;
    this.cards = root.querySelector(".cards") as HTMLElement;
    this.threadPane = root.querySelector(".thread-pane") as HTMLElement;
    this.toast = root.querySelector(".toast") as HTMLElement;
    this.conflictDialog = root.querySelector(".conflict-dialog") as HTMLElement;

    this.queryButton.addEventListener("click", () => void this.submitQuery());
    (root.querySelector(".sync-now") as HTMLButtonElement).addEventListener(
      "click", () => void this.sync(),
    );
    (root.querySelector(".conflict-reload") as HTMLButtonElement).addEventListener(
      "click", () => void this.resolveConflict(true),
    );
    (root.querySelector(".conflict-dismiss") as HTMLButtonElement).addEventListener(
      "click", () => void this.resolveConflict(false),
    );
    root.addEventListener("copy", (event) => this.onCopy(event));
    root.addEventListener("paste", (event) => void this.onPaste(event));
  }

  // -- lifecycle -----------------------------------------------------------

  async load(): Promise<void> {
    this.view = await this.client.getSession(this.sessionId);
    this.textarea.value = this.view.text;
    this.renderAll();
    if (this.options.autoTick !== false) {
      const interval = Math.max(1, this.view.config.snapshot_interval_s) * 1000;
      this.ticker = setInterval(() => void this.tick(), interval);
    }
  }

  dispose(): void {
    if (this.ticker) clearInterval(this.ticker);
  }

  /** Snapshot-cadence tick: push pending edits, record a snapshot, refresh. */
  async tick(): Promise<void> {
    if (this.conflict) return;
    const synced = await this.sync();
    if (!synced) return;
    await this.client.recordEvent(this.sessionId, "snapshot", {});
    await this.refresh();
  }

  // -- server round trips -------------------------------------------------------

  async refresh(): Promise<void> {
    const view = await this.client.getSession(this.sessionId);
    this.view = view;
    if (!this.conflict) this.textarea.value = view.text;
    this.renderAll();
  }

  /** Push textarea changes as one edit batch; false means a conflict. */
  async sync(): Promise<boolean> {
    if (!this.view) return false;
    const edits = computeEdits(this.view.text, this.textarea.value);
    if (edits.length === 0) return true;
    try {
      const response = await this.client.postEdits(
        this.sessionId, this.view.head_version_id, edits,
      );
      this.view = {
        ...this.view,
        text: this.textarea.value,
        head_version_id: response.head_version_id,
      };
      await this.refresh();
      return true;
    } catch (error) {
      if (error instanceof ApiError && error.code === "conflict") {
        this.conflict = true;
        this.renderConflict();
        return false;
      }
      this.showError(error);
      return false;
    }
  }

  async submitQuery(): Promise<void> {
    const query = this.queryInput.value.trim();
    if (!query || !this.view) return;
    if (!(await this.sync())) return;
    try {
      await this.client.metaQuery(this.sessionId, query);
      await this.refresh();
      this.queryInput.value = "";
    } catch (error) {
      // atomic server-side: nothing was created, so render nothing new
      this.showError(error);
      await this.refresh();
    }
  }

  async applySuggestion(threadId: string): Promise<void> {
    if (!this.view) return;
    if (!(await this.sync())) return;
    const thread = threadById(this.view, threadId);
    if (!thread || !thread.anchor.span) return;
    const suggestion = extractSuggestion(lastAiComment(thread), thread.anchor.anchor_text);
    try {
      await this.client.postEdits(this.sessionId, this.view.head_version_id, [
        { kind: "replace", at: thread.anchor.span, new_text: suggestion },
      ]);
      await this.refresh();
      this.openThread(threadId);
      const reply = this.threadPane.querySelector(".reply-input") as HTMLInputElement | null;
      if (reply) reply.placeholder = "Is this version better?";
    } catch (error) {
      if (error instanceof ApiError && error.code === "conflict") {
        this.conflict = true;
        this.renderConflict();
      } else {
        this.showError(error);
      }
    }
  }

  async sendReply(threadId: string, message: string): Promise<void> {
    if (!message.trim()) return;
    try {
      await this.client.replyInThread(threadId, message);
      await this.refresh();
      this.openThread(threadId);
    } catch (error) {
      this.showError(error);
    }
  }

  async resolveConflict(reload: boolean): Promise<void> {
    this.conflict = false;
    this.conflictDialog.hidden = true;
    if (reload) {
      await this.refresh();
    }
    // otherwise the local text stays in the textarea for another sync
  }

  // -- instrumentation ------------------------------------------------------------

  private paneOf(target: EventTarget | null): PasteSource {
    if (target instanceof Element) {
      if (target.closest(".editor")) return "document";
      if (target.closest(".margin") || target.closest(".thread-pane")) {
        return "feedback-pane";
      }
    }
    return "external";
  }

  private onCopy(event: Event): void {
    const selection = this.doc.getSelection ? this.doc.getSelection()?.toString() ?? "" : "";
    const clipboard = (event as ClipboardEvent).clipboardData;
    const text = selection || clipboard?.getData("text/plain") || "";
    if (!text) return;
    const source = this.paneOf(event.target);
    this.lastCopy = { text, source };
    void this.client
      .recordEvent(this.sessionId, "copy", { text, source })
      .catch(() => undefined);
  }

  private async onPaste(event: Event): Promise<void> {
    const clipboard = (event as ClipboardEvent).clipboardData;
    const text = clipboard?.getData("text/plain") ?? "";
    if (!text) return;
    const source: PasteSource =
      this.lastCopy && this.lastCopy.text === text ? this.lastCopy.source : "external";
    await this.client
      .recordEvent(this.sessionId, "paste", { text, source })
      .catch(() => undefined);
  }

  // -- rendering ---------------------------------------------------------------

  renderAll(): void {
    this.renderBackdrop();
    this.renderCards();
    this.renderHead();
    if (this.openThreadId) this.openThread(this.openThreadId);
  }

  private renderHead(): void {
    const label = this.root.querySelector(".head-version") as HTMLElement;
    label.textContent = this.view ? `v${this.view.head_version_id}` : "";
  }

  private renderBackdrop(): void {
    this.backdrop.textContent = "";
    if (!this.view) return;
    for (const segment of backdropSegments(this.view)) {
      if (segment.threadId === null) {
        this.backdrop.appendChild(this.doc.createTextNode(segment.text));
      } else {
        const mark = this.doc.createElement("mark");
        mark.dataset["thread"] = segment.threadId;
        mark.textContent = segment.text;
        this.backdrop.appendChild(mark);
      }
    }
  }

  private renderCards(): void {
    this.cards.textContent = "";
    if (!this.view) return;
    for (const thread of this.view.threads) {
      this.cards.appendChild(this.buildCard(thread));
    }
  }

  private buildCard(thread: ThreadJson): HTMLElement {
    const card = this.doc.createElement("article");
    card.className = `card status-${statusLabel(thread)}`;
    card.dataset["thread"] = thread.thread_id;

    const badge = this.doc.createElement("span");
    badge.className = "badge";
    badge.textContent = statusLabel(thread);
    card.appendChild(badge);

    const anchorLine = this.doc.createElement("blockquote");
    anchorLine.className = "anchor-text";
    anchorLine.textContent = thread.anchor.anchor_text;
    card.appendChild(anchorLine);

    const comment = this.doc.createElement("p");
    comment.className = "comment";
    comment.textContent = lastAiComment(thread);
    card.appendChild(comment);

    const openButton = this.doc.createElement("button");
    openButton.className = "open-thread";
    openButton.textContent = "Open thread";
    openButton.addEventListener("click", () => this.openThread(thread.thread_id));
    card.appendChild(openButton);

    if (thread.state !== "orphaned" && thread.anchor.span) {
      const applyButton = this.doc.createElement("button");
      applyButton.className = "apply-suggestion";
      applyButton.textContent = "Apply suggestion";
      applyButton.addEventListener("click", () => void this.applySuggestion(thread.thread_id));
      card.appendChild(applyButton);

      card.addEventListener("mouseenter", () => this.setActiveHighlight(thread.thread_id, true));
      card.addEventListener("mouseleave", () => this.setActiveHighlight(thread.thread_id, false));
    }
    return card;
  }

  private setActiveHighlight(threadId: string, active: boolean): void {
    const mark = this.backdrop.querySelector(`mark[data-thread="${threadId}"]`);
    if (mark) mark.classList.toggle("active", active);
  }

  openThread(threadId: string): void {
    if (!this.view) return;
    const thread = threadById(this.view, threadId);
    if (!thread) return;
    this.openThreadId = threadId;
    this.threadPane.hidden = false;
    this.threadPane.textContent = "";

    const heading = this.doc.createElement("h3");
    heading.textContent = `Thread on: ${thread.anchor.anchor_text}`;
    this.threadPane.appendChild(heading);

    if (thread.state === "orphaned") {
      const note = this.doc.createElement("p");
      note.className = "orphan-note";
      note.textContent = "The anchored text no longer exists in the document.";
      this.threadPane.appendChild(note);
    }

    const list = this.doc.createElement("ol");
    list.className = "messages";
    for (const message of thread.messages) {
      const item = this.doc.createElement("li");
      item.className = `message ${message.author}`;
      const action = message.action ? ` [${message.action}]` : "";
      item.textContent = `${message.author}${action}: ${message.text}`;
      list.appendChild(item);
    }
    this.threadPane.appendChild(list);

    const replyInput = this.doc.createElement("input");
    replyInput.className = "reply-input";
    replyInput.type = "text";
    replyInput.placeholder = "Reply in this thread";
    this.threadPane.appendChild(replyInput);

    const replyButton = this.doc.createElement("button");
    replyButton.className = "reply-send";
    replyButton.textContent = "Send";
    replyButton.addEventListener("click", () => {
      const message = replyInput.value;
      replyInput.value = "";
      void this.sendReply(threadId, message);
    });
    this.threadPane.appendChild(replyButton);
  }

  private renderConflict(): void {
    this.conflictDialog.hidden = false;
  }

  private showError(error: unknown): void {
    this.lastError = error instanceof Error ? error.message : String(error);
    this.toast.hidden = false;
    this.toast.textContent = this.lastError;
  }
}

/** Convenience used by tests and main.ts alike. */
export async function mountApp(
  root: HTMLElement,
  client: ApiClient,
  sessionId: string,
  options: AppOptions = {},
): Promise<App> {
  const app = new App(root, client, sessionId, options);
  await app.load();
  return app;
}
