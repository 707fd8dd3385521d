/** Client-side blueprint validation, mirroring the service's rules so
 * obviously broken edits never leave the browser. */

import type { Blueprint } from "./types.js";

export function validateBlueprint(pb: Blueprint): string[] {
  const problems: string[] = [];
  if (!pb.id.trim()) problems.push("blueprint id is empty");
  if (!pb.request_kind.trim()) problems.push("request kind is empty");
  if (pb.tasks.length === 0) problems.push("empty task list");
  const seen = new Set<string>();
  for (const task of pb.tasks) {
    if (!task.id.trim()) problems.push("task with empty id");
    else if (seen.has(task.id)) problems.push(`duplicate task id ${task.id}`);
    else seen.add(task.id);
    if (task.required.length === 0) problems.push(`task ${task.id} requires no capabilities`);
    for (const cap of task.required) {
      if (!cap.trim()) problems.push(`task ${task.id} has an empty capability token`);
    }
  }
  return problems;
}

/** Parse the compact editor syntax: one task per line, `T1: C1, C3` */
export function parseTaskLines(text: string): { id: string; required: string[] }[] {
  const tasks: { id: string; required: string[] }[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (!line) continue;
    const colon = line.indexOf(":");
    const id = colon >= 0 ? line.slice(0, colon).trim() : line;
    const capsText = colon >= 0 ? line.slice(colon + 1) : "";
    const required = capsText
      .split(/[\s,]+/)
      .map((c) => c.trim())
      .filter(Boolean);
    tasks.push({ id, required });
  }
  return tasks;
}
