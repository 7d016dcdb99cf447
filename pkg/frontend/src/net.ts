// WebSocket session client with automatic reconnection. The view state is
// rebuilt entirely from server messages, so reconnecting mid-trial needs no
// local recovery beyond the next scene + snapshot.

import type { ClientMsg, ServerMsg } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface SessionClientOptions {
  url: string;
  socketFactory: SocketFactory;
  onMessage: (msg: ServerMsg) => void;
  onState: (state: "connecting" | "open" | "closed") => void;
  reconnectDelayMs?: number;
  setTimeoutFn?: typeof setTimeout;
}

export class SessionClient {
  private socket: SocketLike | null = null;
  private closed = false;

  constructor(private options: SessionClientOptions) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    this.options.onState("connecting");
    const socket = this.options.socketFactory(this.options.url);
    this.socket = socket;
    socket.onopen = () => this.options.onState("open");
    socket.onmessage = (ev) => {
      try {
        this.options.onMessage(JSON.parse(String(ev.data)) as ServerMsg);
      } catch {
        // ignore undecodable frames
      }
    };
    socket.onclose = () => {
      this.options.onState("closed");
      if (!this.closed) {
        const delay = this.options.reconnectDelayMs ?? 1000;
        (this.options.setTimeoutFn ?? setTimeout)(() => {
          if (!this.closed) this.open();
        }, delay);
      }
    };
    socket.onerror = () => {
      // onclose follows; nothing to do
    };
  }

  send(msg: ClientMsg): boolean {
    if (!this.socket) return false;
    try {
      this.socket.send(JSON.stringify(msg));
      return true;
    } catch {
      return false;
    }
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }
}
