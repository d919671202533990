/** Client-side view of the group tree: lookup, ancestry, breadcrumbs. */

import type { TreeDto, TreeNodeDto } from "./api.js";

export class TreeModel {
  readonly roots: number[];
  private readonly byId = new Map<number, TreeNodeDto>();

  constructor(dto: TreeDto) {
    this.roots = [...dto.roots];
    for (const n of dto.nodes) this.byId.set(n.id, n);
    for (const n of dto.nodes) {
      for (const c of n.children) {
        if (!this.byId.has(c)) throw new Error(`child ${c} of ${n.id} missing`);
      }
    }
  }

  get size(): number {
    return this.byId.size;
  }

  node(id: number): TreeNodeDto {
    const n = this.byId.get(id);
    if (n === undefined) throw new Error(`unknown tree node ${id}`);
    return n;
  }

  childrenOf(id: number): TreeNodeDto[] {
    return this.node(id).children.map((c) => this.node(c));
  }

  /** Ancestor path from the root down to and including id. */
  breadcrumbs(id: number): TreeNodeDto[] {
    const path: TreeNodeDto[] = [];
    let cur: TreeNodeDto | null = this.node(id);
    while (cur !== null) {
      path.push(cur);
      cur = cur.parent === null ? null : this.node(cur.parent);
    }
    return path.reverse();
  }

  depth(id: number): number {
    return this.breadcrumbs(id).length - 1;
  }

  isAncestor(a: number, b: number): boolean {
    let cur = this.node(b);
    while (cur.parent !== null) {
      if (cur.parent === a) return true;
      cur = this.node(cur.parent);
    }
    return false;
  }

  /** Nodes with no children, the finest groups in the tree. */
  leaves(): TreeNodeDto[] {
    return [...this.byId.values()].filter((n) => n.children.length === 0);
  }
}
