/** Wire types mirroring the teleop service payloads. */

export type ActionName =
  | "move_forward"
  | "turn_left"
  | "turn_right"
  | "look_up"
  | "look_down"
  | "stop";

export type EpisodeStatus = "running" | "success" | "failure_stop" | "failure_timeout";

export interface AgentPose {
  x: number;
  y: number;
  heading: number;
  heading_deg: number;
  pitch: number;
}

export interface VisibleObject {
  category: string;
  bearing_deg: number;
  distance_cells: number;
}

/** Fog-of-war snapshot of one session, exactly as the service renders it. */
export interface ViewState {
  session_id: string;
  episode_id: string;
  scene_id: string;
  target_category: string;
  width: number;
  height: number;
  grid: string[];
  agent: AgentPose;
  visible_objects: VisibleObject[];
  steps: number;
  max_steps: number;
  status: EpisodeStatus;
  path_length_m: number;
  actions: ActionName[];
  committed: boolean;
}

export interface CommitReceipt {
  episode_id: string;
  outcome: EpisodeStatus;
  steps: number;
  file: string;
}

export interface TrajectorySummary {
  episode_id: string;
  scene_id: string;
  target_category: string;
  demo_source: string;
  outcome: string;
  steps: number;
}

export interface TrajectoryListing {
  count: number;
  trajectories: TrajectorySummary[];
}
