// Grades-CSV parsing for pasted or uploaded transcripts. Mirrors the wire
// format the backend ingests: header student_id,course_id,term,grade with
// numeric or letter grades.

import type { TranscriptRow } from "./api.js";

const LETTER_VALUES: Record<string, number> = {
  "A+": 4, A: 4, "A-": 3.67, "B+": 3.33, B: 3, "B-": 2.67,
  "C+": 2.33, C: 2, "C-": 1.67, D: 1, F: 0,
};

export interface ParsedTranscript {
  studentId: string | null;
  rows: TranscriptRow[];
}

export class TranscriptParseError extends Error {
  constructor(public line: number, message: string) {
    super(`line ${line}: ${message}`);
  }
}

export function parseTranscript(text: string): ParsedTranscript {
  const lines = text.split(/\r?\n/);
  if (lines.length === 0 || lines[0].trim() === "") {
    throw new TranscriptParseError(1, "empty transcript");
  }
  const header = lines[0].split(",").map((c) => c.trim());
  const expected = ["student_id", "course_id", "term", "grade"];
  if (header.join(",") !== expected.join(",")) {
    throw new TranscriptParseError(1, `expected header ${expected.join(",")}`);
  }
  const rows: TranscriptRow[] = [];
  let studentId: string | null = null;
  for (let i = 1; i < lines.length; i += 1) {
    const raw = lines[i].trim();
    if (raw === "") continue;
    const cells = raw.split(",").map((c) => c.trim());
    if (cells.length !== 4) {
      throw new TranscriptParseError(i + 1, `expected 4 fields, got ${cells.length}`);
    }
    const [sid, course, termTok, gradeTok] = cells;
    if (sid === "" || course === "") {
      throw new TranscriptParseError(i + 1, "empty student or course id");
    }
    const term = Number(termTok);
    if (!Number.isInteger(term) || term < 0) {
      throw new TranscriptParseError(i + 1, `bad term ${JSON.stringify(termTok)}`);
    }
    let grade: number;
    if (gradeTok in LETTER_VALUES) {
      grade = LETTER_VALUES[gradeTok];
    } else {
      grade = Number(gradeTok);
      if (!Number.isFinite(grade) || grade < 0 || grade > 4) {
        throw new TranscriptParseError(i + 1, `bad grade ${JSON.stringify(gradeTok)}`);
      }
    }
    studentId = studentId ?? sid;
    rows.push({ course, term, grade });
  }
  return { studentId, rows };
}
