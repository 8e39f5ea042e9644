/** Job polling: the service exposes no push channel, so views poll. */

import type { ApiClient } from "./api.js";
import type { JobDoc } from "./types.js";

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onProgress?: (job: JobDoc) => void;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export async function pollJob(
  client: ApiClient,
  job: JobDoc,
  options: PollOptions = {},
): Promise<JobDoc> {
  const interval = options.intervalMs ?? 1000;
  const deadline = Date.now() + (options.timeoutMs ?? 120_000);
  let current = job;
  while (current.state === "queued" || current.state === "running") {
    if (Date.now() > deadline) {
      throw new Error(`job ${job.id} timed out`);
    }
    await sleep(interval);
    current = await client.getJob(job.id);
    options.onProgress?.(current);
  }
  if (current.state === "failed") {
    throw new Error(`job ${job.id} failed: ${current.error ?? "unknown error"}`);
  }
  return current;
}
