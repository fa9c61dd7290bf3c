// Websocket client with latest-state-wins delivery: rendering always reads
// the newest snapshot and never queues behind slow frames.

import { EndMsg, MetricsMsg, StateMsg, parseServerMessage } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed" | "error";

export interface SessionCallbacks {
  onStatus?: (s: ConnectionStatus) => void;
  onMetrics?: (m: MetricsMsg) => void;
  onEnd?: (m: EndMsg) => void;
}

export class SessionClient {
  latestState: StateMsg | null = null;
  status: ConnectionStatus = "connecting";
  private ws: WebSocket;

  constructor(url: string, private callbacks: SessionCallbacks = {}) {
    this.ws = new WebSocket(url);
    this.ws.onopen = () => this.setStatus("open");
    this.ws.onclose = () => this.setStatus("closed");
    this.ws.onerror = () => this.setStatus("error");
    this.ws.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg === null) {
        console.warn("malformed server message skipped");
        return;
      }
      if (msg.type === "state") this.latestState = msg;
      else if (msg.type === "metrics") this.callbacks.onMetrics?.(msg);
      else this.callbacks.onEnd?.(msg);
    };
  }

  private setStatus(s: ConnectionStatus) {
    this.status = s;
    this.callbacks.onStatus?.(s);
  }

  send = (frame: string): void => {
    if (this.ws.readyState === WebSocket.OPEN) this.ws.send(frame);
  };

  close(): void {
    this.ws.close();
  }
}

export function defaultServerUrl(loc: Location): string {
  const scheme = loc.protocol === "https:" ? "wss:" : "ws:";
  return `${scheme}//${loc.host}/ws`;
}
