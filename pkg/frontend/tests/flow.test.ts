// End-to-end against the stubbed service: query -> create virtual synset ->
// label 50 candidates -> train -> job completes -> re-query returns the
// re-indexed video.

import { describe, expect, it } from 'vitest';

import { ApiClient, ServiceError } from '../src/api.js';
import { AnnotateFlow, QueryView } from '../src/state.js';
import { stubService } from './stub_service.js';

const instantPoll = { intervalMs: 1, sleep: async () => {} };

function client(options: Parameters<typeof stubService>[0] = {}) {
  const stub = stubService(options);
  return { api: new ApiClient('', stub.fetch), state: stub.state };
}

describe('annotation flow end to end', () => {
  it('query, create, label 50, train, job done, re-query hits the re-indexed video', async () => {
    const { api } = client();
    const queryView = new QueryView(api);

    await queryView.run('kn95 face mask');
    expect(queryView.hits[0]?.matched).toEqual(['face_mask.n.01']);

    const flow = new AnnotateFlow(api);
    await flow.start('face_mask.n.01', 'kn95 face mask', 50);
    expect(flow.total).toBe(50);
    expect(flow.phase).toBe('labeling');

    let index = 0;
    while (flow.current !== null) {
      flow.label(index < 25 ? 'positive' : 'negative');
      index += 1;
    }
    expect(flow.labeled).toBe(50);
    expect(flow.trainBlockedReason()).toBeNull();

    const progressStatuses: string[] = [];
    const job = await flow.submitAndTrain({
      ...instantPoll,
      onProgress: (j) => progressStatuses.push(j.status),
    });
    expect(flow.phase).toBe('done');
    expect(job.status).toBe('done');
    expect(job.progress.accepted).toBe(25);
    expect(progressStatuses).toContain('running');
    expect(progressStatuses[progressStatuses.length - 1]).toBe('done');

    await queryView.run('kn95 face mask');
    expect(queryView.hits[0]?.video_id).toBe('masks');
    expect(queryView.hits[0]?.matched).toContain('kn95_face_mask.virtual.n.01');
    expect(queryView.hits[0]?.score).toBe(1.0);
  });

  it('all-positive labels are blocked client-side with an explanation', async () => {
    const { api } = client();
    const flow = new AnnotateFlow(api);
    await flow.start('face_mask.n.01', 'kn95 face mask', 50);
    while (flow.current !== null) flow.label('positive');
    expect(flow.trainBlockedReason()).toBe('need at least one negative');
    await expect(flow.submitAndTrain(instantPoll)).rejects.toThrow('need at least one negative');
  });

  it('the stub service also rejects single-class labels (mirrors the backend)', async () => {
    const { api, state } = client();
    const flow = new AnnotateFlow(api);
    await flow.start('face_mask.n.01', 'kn95 face mask', 50);
    // bypass the client-side guard to prove the service-side rule
    await api.submitLabels(flow.virtual!.id, [
      { video_id: 'masks', frame_index: 0, box: [0, 0, 0.1, 0.1], label: 'positive' },
      { video_id: 'masks', frame_index: 0, box: [0.2, 0, 0.3, 0.1], label: 'positive' },
    ]);
    await expect(api.train(flow.virtual!.id)).rejects.toMatchObject({
      code: 'single-class-input',
    });
    expect(state.labels).toHaveLength(2);
  });

  it('a failed job surfaces with retry-able state', async () => {
    const { api } = client({ failJob: true });
    const flow = new AnnotateFlow(api);
    await flow.start('face_mask.n.01', 'kn95 face mask', 50);
    let toggle = false;
    while (flow.current !== null) {
      flow.label(toggle ? 'positive' : 'negative');
      toggle = !toggle;
    }
    await expect(flow.submitAndTrain(instantPoll)).rejects.toThrow('planted failure');
    expect(flow.phase).toBe('failed');
    expect(flow.error).toContain('planted failure');
  });

  it('duplicate virtual names surface the service error code', async () => {
    const { api } = client();
    await api.createVirtual('face_mask.n.01', 'kn95 face mask');
    await expect(api.createVirtual('face_mask.n.01', 'kn95 face mask')).rejects.toMatchObject({
      code: 'duplicate-name',
    });
  });

  it('no-known-terms query errors render as validation state, not a crash', async () => {
    const { api } = client();
    const queryView = new QueryView(api);
    await queryView.run('qwxzzz');
    expect(queryView.hits).toHaveLength(0);
    expect(queryView.errorCode).toBe('no-known-terms');
    expect(queryView.errorMessage.length).toBeGreaterThan(0);
  });

  it('unknown frame and job routes return structured not-found errors', async () => {
    const { api } = client();
    await expect(api.frame('ghost', 0)).rejects.toBeInstanceOf(ServiceError);
    await expect(api.job('job-nope')).rejects.toMatchObject({ code: 'not-found' });
  });
});
