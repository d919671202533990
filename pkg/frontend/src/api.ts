/** Typed client for the point-cloud/group service. The viewer never
 * computes affinity locally; every selection comes from these endpoints. */

export interface Meta {
  n_points: number;
  s_max: number;
  scale_step: number;
  threshold: number;
  n_nodes: number;
  roots: number[];
}

export interface TreeNodeDto {
  id: number;
  parent: number | null;
  children: number[];
  split_scale: number;
  count: number;
  centroid: [number, number, number];
  bbox: [number[], number[]];
}

export interface TreeDto {
  roots: number[];
  nodes: TreeNodeDto[];
}

export interface PointCloud {
  count: number;
  /** count*3 world positions, interleaved xyz. */
  positions: Float32Array;
  /** count*3 RGB bytes. */
  colors: Uint8Array;
}

export interface ScaleMask {
  scale: number;
  indices: number[];
}

export type Vec3 = [number, number, number];
export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let res: Response;
    try {
      res = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`);
    }
    if (!res.ok) {
      throw new ApiError(`${path} failed with ${res.status}`, res.status);
    }
    return res;
  }

  async meta(): Promise<Meta> {
    return (await this.request("/meta")).json();
  }

  async points(): Promise<PointCloud> {
    const res = await this.request("/points");
    const count = Number(res.headers.get("X-Point-Count"));
    const buf = await res.arrayBuffer();
    if (!Number.isFinite(count) || buf.byteLength !== count * 15) {
      throw new ApiError(
        `bad /points payload: ${buf.byteLength} bytes for count ${count}`,
      );
    }
    return {
      count,
      positions: new Float32Array(buf, 0, count * 3),
      colors: new Uint8Array(buf, count * 12, count * 3),
    };
  }

  async tree(): Promise<TreeDto> {
    return (await this.request("/tree")).json();
  }

  async node(id: number): Promise<number[]> {
    const body = await (await this.request(`/node/${id}`)).json();
    return body.indices;
  }

  async select(click: Vec3, scale: number, threshold: number): Promise<number[]> {
    const res = await this.request("/select", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ click, scale, threshold }),
    });
    return (await res.json()).indices;
  }

  async multiscale(click: Vec3, threshold?: number): Promise<ScaleMask[]> {
    const res = await this.request("/multiscale", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ click, threshold: threshold ?? null }),
    });
    return (await res.json()).masks;
  }
}
