// Minimal MQTT 3.1.1 client over a browser WebSocket (subprotocol "mqtt").
// Supports what the console needs: CONNECT, QoS-0 publish, subscribe with
// wildcard filters, PINGREQ keepalive, and reconnect with resubscribe.
// Packet encode/decode helpers are pure and unit-tested.

export const CONNECT = 1;
export const CONNACK = 2;
export const PUBLISH = 3;
export const PUBACK = 4;
export const SUBSCRIBE = 8;
export const SUBACK = 9;
export const PINGREQ = 12;
export const PINGRESP = 13;
export const DISCONNECT = 14;

const encoder = new TextEncoder();
const decoder = new TextDecoder();

export function encodeString(s: string): Uint8Array {
  const data = encoder.encode(s);
  const out = new Uint8Array(2 + data.length);
  out[0] = data.length >> 8;
  out[1] = data.length & 0xff;
  out.set(data, 2);
  return out;
}

export function encodeVarint(n: number): Uint8Array {
  const out: number[] = [];
  do {
    let byte = n % 128;
    n = Math.floor(n / 128);
    if (n > 0) byte |= 0x80;
    out.push(byte);
  } while (n > 0);
  return Uint8Array.from(out);
}

export function encodePacket(type: number, flags: number, body: Uint8Array): Uint8Array {
  const len = encodeVarint(body.length);
  const out = new Uint8Array(1 + len.length + body.length);
  out[0] = (type << 4) | flags;
  out.set(len, 1);
  out.set(body, 1 + len.length);
  return out;
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let at = 0;
  for (const p of parts) {
    out.set(p, at);
    at += p.length;
  }
  return out;
}

export function connectPacket(clientId: string, credentials?: [string, string]): Uint8Array {
  let flags = 0x02; // clean session
  const tail: Uint8Array[] = [encodeString(clientId)];
  if (credentials) {
    flags |= 0x80 | 0x40;
    tail.push(encodeString(credentials[0]), encodeString(credentials[1]));
  }
  const head = concat([encodeString('MQTT'), Uint8Array.from([4, flags, 0, 60])]);
  return encodePacket(CONNECT, 0, concat([head, ...tail]));
}

export function publishPacket(topic: string, payload: Uint8Array): Uint8Array {
  return encodePacket(PUBLISH, 0, concat([encodeString(topic), payload]));
}

export function subscribePacket(packetId: number, filter: string): Uint8Array {
  const body = concat([
    Uint8Array.from([packetId >> 8, packetId & 0xff]),
    encodeString(filter),
    Uint8Array.from([0]),
  ]);
  return encodePacket(SUBSCRIBE, 0x02, body);
}

export interface Packet {
  type: number;
  flags: number;
  body: Uint8Array;
}

/** Incremental packet splitter; feed() returns completed packets. */
export class PacketReader {
  private buffer: Uint8Array = new Uint8Array(0);

  feed(chunk: Uint8Array): Packet[] {
    this.buffer = concat([this.buffer, chunk]);
    const packets: Packet[] = [];
    for (;;) {
      const parsed = this.tryParse();
      if (!parsed) return packets;
      packets.push(parsed);
    }
  }

  private tryParse(): Packet | null {
    const buf = this.buffer;
    if (buf.length < 2) return null;
    let length = 0;
    let shift = 0;
    let at = 1;
    for (;;) {
      if (at >= buf.length) return null;
      const byte = buf[at++];
      length |= (byte & 0x7f) << shift;
      if ((byte & 0x80) === 0) break;
      shift += 7;
      if (shift > 21) throw new Error('bad remaining-length varint');
    }
    if (buf.length < at + length) return null;
    const packet: Packet = {
      type: buf[0] >> 4,
      flags: buf[0] & 0x0f,
      body: buf.slice(at, at + length),
    };
    this.buffer = buf.slice(at + length);
    return packet;
  }
}

export function parseString(body: Uint8Array, at: number): [string, number] {
  const n = (body[at] << 8) | body[at + 1];
  return [decoder.decode(body.slice(at + 2, at + 2 + n)), at + 2 + n];
}

export interface PublishMessage {
  topic: string;
  payload: Uint8Array;
  packetId: number | null;
}

export function parsePublish(packet: Packet): PublishMessage {
  const qos = (packet.flags >> 1) & 0x03;
  const [topic, at] = parseString(packet.body, 0);
  let packetId: number | null = null;
  let payloadAt = at;
  if (qos > 0) {
    packetId = (packet.body[at] << 8) | packet.body[at + 1];
    payloadAt += 2;
  }
  return { topic, payload: packet.body.slice(payloadAt), packetId };
}

export function filterMatches(filter: string, topic: string): boolean {
  const f = filter.split('/');
  const t = topic.split('/');
  for (let k = 0; k < f.length; k++) {
    if (f[k] === '#') return true;
    if (k >= t.length) return false;
    if (f[k] !== '+' && f[k] !== t[k]) return false;
  }
  return t.length === f.length;
}

export type MessageHandler = (topic: string, payload: string) => void;

export interface WsMqttOptions {
  clientId?: string;
  credentials?: [string, string];
  keepaliveSeconds?: number;
  reconnectDelayMs?: number;
  onStatus?: (connected: boolean) => void;
}

/** Browser MQTT session; reconnects forever with fixed delay. */
export class WsMqttClient {
  private ws: WebSocket | null = null;
  private reader = new PacketReader();
  private subs: { filter: string; handler: MessageHandler }[] = [];
  private nextId = 1;
  private pingTimer: ReturnType<typeof setInterval> | null = null;
  private closed = false;
  connected = false;

  constructor(private url: string, private options: WsMqttOptions = {}) {}

  open(): void {
    if (this.closed) return;
    const ws = new WebSocket(this.url, 'mqtt');
    ws.binaryType = 'arraybuffer';
    this.ws = ws;
    this.reader = new PacketReader();
    ws.onopen = () => {
      ws.send(connectPacket(this.options.clientId ?? `console-${Date.now()}`, this.options.credentials));
    };
    ws.onmessage = (event) => this.onData(new Uint8Array(event.data as ArrayBuffer));
    ws.onclose = () => this.onDisconnect();
    ws.onerror = () => ws.close();
  }

  private onData(chunk: Uint8Array): void {
    for (const packet of this.reader.feed(chunk)) {
      if (packet.type === CONNACK) {
        if (packet.body[1] === 0) {
          this.connected = true;
          this.options.onStatus?.(true);
          for (const sub of this.subs) {
            this.ws?.send(subscribePacket(this.nextId++ % 65535 || 1, sub.filter));
          }
          const interval = (this.options.keepaliveSeconds ?? 45) * 1000;
          this.pingTimer = setInterval(() => {
            if (this.connected) this.ws?.send(encodePacket(PINGREQ, 0, new Uint8Array(0)));
          }, interval);
        }
      } else if (packet.type === PUBLISH) {
        const message = parsePublish(packet);
        const text = decoder.decode(message.payload);
        for (const sub of this.subs) {
          if (filterMatches(sub.filter, message.topic)) sub.handler(message.topic, text);
        }
      }
      // SUBACK/PINGRESP need no action at QoS 0
    }
  }

  private onDisconnect(): void {
    const was = this.connected;
    this.connected = false;
    if (this.pingTimer !== null) clearInterval(this.pingTimer);
    this.pingTimer = null;
    if (was) this.options.onStatus?.(false);
    if (!this.closed) {
      setTimeout(() => this.open(), this.options.reconnectDelayMs ?? 2000);
    }
  }

  publish(topic: string, payload: string): void {
    if (!this.connected || !this.ws) throw new Error('not connected');
    this.ws.send(publishPacket(topic, encoder.encode(payload)));
  }

  subscribe(filter: string, handler: MessageHandler): void {
    this.subs.push({ filter, handler });
    if (this.connected && this.ws) {
      this.ws.send(subscribePacket(this.nextId++ % 65535 || 1, filter));
    }
  }

  close(): void {
    this.closed = true;
    this.connected = false;
    if (this.pingTimer !== null) clearInterval(this.pingTimer);
    try {
      this.ws?.send(encodePacket(DISCONNECT, 0, new Uint8Array(0)));
    } catch {
      // already gone
    }
    this.ws?.close();
  }
}
