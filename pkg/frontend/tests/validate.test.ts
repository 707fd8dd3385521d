import { describe, expect, it } from "vitest";

import { parseTaskLines, validateBlueprint } from "../src/validate.js";

describe("validateBlueprint", () => {
  it("accepts the three-task showcase blueprint", () => {
    const pb = {
      id: "Pb2",
      request_kind: "Rq2",
      tasks: [
        { id: "T1", required: ["C1", "C3", "C4"] },
        { id: "T2", required: ["C2"] },
        { id: "T3", required: ["C2", "C5"] },
      ],
    };
    expect(validateBlueprint(pb)).toEqual([]);
  });

  it("blocks an empty task list before it reaches the service", () => {
    expect(validateBlueprint({ id: "Pb", request_kind: "Rq", tasks: [] })).toContain(
      "empty task list",
    );
  });

  it("reports every violation, not just the first", () => {
    const problems = validateBlueprint({
      id: "",
      request_kind: "Rq",
      tasks: [
        { id: "T1", required: [] },
        { id: "T1", required: ["C1"] },
      ],
    });
    expect(problems).toContain("blueprint id is empty");
    expect(problems).toContain("duplicate task id T1");
    expect(problems).toContain("task T1 requires no capabilities");
  });
});

describe("parseTaskLines", () => {
  it("parses one task per line with comma or space separated capabilities", () => {
    expect(parseTaskLines("T1: C1, C3 C4\nT2: C2\n\nT3: C2,C5")).toEqual([
      { id: "T1", required: ["C1", "C3", "C4"] },
      { id: "T2", required: ["C2"] },
      { id: "T3", required: ["C2", "C5"] },
    ]);
  });

  it("keeps a capability-less line as an invalid task for validation to flag", () => {
    const tasks = parseTaskLines("T9");
    expect(tasks).toEqual([{ id: "T9", required: [] }]);
    expect(
      validateBlueprint({ id: "Pb", request_kind: "Rq", tasks }),
    ).toContain("task T9 requires no capabilities");
  });
});
