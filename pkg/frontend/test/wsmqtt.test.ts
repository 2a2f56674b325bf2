import { describe, expect, it } from 'vitest';

import {
  CONNECT,
  PUBLISH,
  SUBSCRIBE,
  PacketReader,
  connectPacket,
  encodePacket,
  encodeVarint,
  filterMatches,
  parsePublish,
  parseString,
  publishPacket,
  subscribePacket,
} from '../src/wsmqtt.js';

describe('packet encoding', () => {
  it('varint covers the multi-byte ranges', () => {
    expect([...encodeVarint(0)]).toEqual([0]);
    expect([...encodeVarint(127)]).toEqual([127]);
    expect([...encodeVarint(128)]).toEqual([0x80, 1]);
    expect([...encodeVarint(16383)]).toEqual([0xff, 0x7f]);
    expect([...encodeVarint(2097152)]).toEqual([0x80, 0x80, 0x80, 1]);
  });

  it('publish round trips through the reader', () => {
    const payload = new TextEncoder().encode('{"x": 1}');
    const reader = new PacketReader();
    const packets = reader.feed(publishPacket('dt/coverage/request', payload));
    expect(packets).toHaveLength(1);
    expect(packets[0].type).toBe(PUBLISH);
    const message = parsePublish(packets[0]);
    expect(message.topic).toBe('dt/coverage/request');
    expect(new TextDecoder().decode(message.payload)).toBe('{"x": 1}');
    expect(message.packetId).toBeNull();
  });

  it('reader reassembles packets split across chunks', () => {
    const packet = publishPacket('a/b', new TextEncoder().encode('x'.repeat(300)));
    const reader = new PacketReader();
    expect(reader.feed(packet.slice(0, 1))).toHaveLength(0);
    expect(reader.feed(packet.slice(1, 5))).toHaveLength(0);
    const done = reader.feed(packet.slice(5));
    expect(done).toHaveLength(1);
    expect(parsePublish(done[0]).topic).toBe('a/b');
  });

  it('reader splits coalesced packets', () => {
    const a = publishPacket('t/1', new Uint8Array([1]));
    const b = publishPacket('t/2', new Uint8Array([2]));
    const joined = new Uint8Array(a.length + b.length);
    joined.set(a);
    joined.set(b, a.length);
    const packets = new PacketReader().feed(joined);
    expect(packets.map((p) => parsePublish(p).topic)).toEqual(['t/1', 't/2']);
  });

  it('connect packet carries protocol name, client id and credentials', () => {
    const packet = connectPacket('console-1', ['user', 'pw']);
    const reader = new PacketReader();
    const [parsed] = reader.feed(packet);
    expect(parsed.type).toBe(CONNECT);
    const [proto, at] = parseString(parsed.body, 0);
    expect(proto).toBe('MQTT');
    expect(parsed.body[at]).toBe(4); // protocol level
    expect(parsed.body[at + 1] & 0x80).toBeTruthy(); // username flag
    expect(parsed.body[at + 1] & 0x40).toBeTruthy(); // password flag
    const [clientId, at2] = parseString(parsed.body, at + 4);
    expect(clientId).toBe('console-1');
    const [user] = parseString(parsed.body, at2);
    expect(user).toBe('user');
  });

  it('subscribe packet has the reserved flags and the filter', () => {
    const packet = subscribePacket(7, 'dt/coverage/result/#');
    const [parsed] = new PacketReader().feed(packet);
    expect(parsed.type).toBe(SUBSCRIBE);
    expect(parsed.flags).toBe(0x02);
    expect((parsed.body[0] << 8) | parsed.body[1]).toBe(7);
    const [filter] = parseString(parsed.body, 2);
    expect(filter).toBe('dt/coverage/result/#');
  });

  it('encodePacket + reader agree on empty bodies', () => {
    const [parsed] = new PacketReader().feed(encodePacket(12, 0, new Uint8Array(0)));
    expect(parsed.type).toBe(12);
    expect(parsed.body).toHaveLength(0);
  });
});

describe('filterMatches', () => {
  it.each([
    ['dt/coverage/result/#', 'dt/coverage/result/job-1', true],
    ['dt/coverage/result/#', 'dt/coverage/result', true],
    ['dt/sensors/#', 'dt/actuators/x', false],
    ['dt/+/t1', 'dt/sensors/t1', true],
    ['a/b', 'a/b/c', false],
  ])('%s vs %s -> %s', (filter, topic, expected) => {
    expect(filterMatches(filter as string, topic as string)).toBe(expected);
  });
});
