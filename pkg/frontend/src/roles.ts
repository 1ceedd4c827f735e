/**
 * Assign the four extreme roles to clicks, mirroring the server's rule:
 * each role takes the click attaining its extreme coordinate, ties resolved
 * by walking roles in the priority order left, top, right, bottom and
 * giving each the earliest still-unassigned click.
 */

export const ROLES = ["left", "top", "right", "bottom"] as const;
export type Role = (typeof ROLES)[number];

export interface XY {
  x: number;
  y: number;
}

const KEY: Record<Role, (p: XY) => number> = {
  left: (p) => p.x,
  top: (p) => p.y,
  right: (p) => -p.x,
  bottom: (p) => -p.y,
};

/** Map each role to the index of the click that plays it. */
export function inferRoles(points: readonly XY[]): Record<Role, number> {
  if (points.length !== 4) {
    throw new Error(`extreme clicks need exactly 4 points, got ${points.length}`);
  }
  const unassigned = [0, 1, 2, 3];
  const roles = {} as Record<Role, number>;
  for (const role of ROLES) {
    const key = KEY[role];
    let best = unassigned[0];
    for (const i of unassigned) {
      if (key(points[i]) < key(points[best])) best = i;
    }
    roles[role] = best;
    unassigned.splice(unassigned.indexOf(best), 1);
  }
  return roles;
}

/** Inverse view: for each click index, the role it plays. */
export function roleOfClick(points: readonly XY[]): Role[] {
  const roles = inferRoles(points);
  const byIndex = new Array<Role>(4);
  for (const role of ROLES) byIndex[roles[role]] = role;
  return byIndex;
}
