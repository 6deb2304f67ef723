/** Message-content formatting: code-block segmentation and key masking. */

export interface ContentSegment {
  kind: "text" | "code";
  text: string;
}

/**
 * Split message content on triple-backtick fences so code renders as
 * distinct panels. An unterminated fence runs to the end of the message.
 */
export function segmentContent(content: string): ContentSegment[] {
  const segments: ContentSegment[] = [];
  const lines = content.split("\n");
  let code: string[] | null = null;
  let text: string[] = [];
  const flushText = () => {
    if (text.length > 0) {
      segments.push({ kind: "text", text: text.join("\n") });
      text = [];
    }
  };
  for (const line of lines) {
    if (line.trimStart().startsWith("```")) {
      if (code === null) {
        flushText();
        code = [];
      } else {
        segments.push({ kind: "code", text: code.join("\n") });
        code = null;
      }
    } else if (code !== null) {
      code.push(line);
    } else {
      text.push(line);
    }
  }
  if (code !== null) {
    segments.push({ kind: "code", text: code.join("\n") });
  }
  flushText();
  return segments;
}

const FAKE_KEY_PATTERN = /\b[0-9a-f]{8}\b/g;
export const KEY_MASK = "••••••••";

/**
 * Mask anything shaped like a fake key (8 lowercase hex chars) unless the
 * operator has toggled reveal. Real keys never reach the client at all;
 * this guards the placeholder keys shown to models.
 */
export function maskKeys(text: string, reveal: boolean): string {
  if (reveal) return text;
  return text.replace(FAKE_KEY_PATTERN, KEY_MASK);
}
