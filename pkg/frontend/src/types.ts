// Wire types for the prediction service; mirror the server's JSON schema.

export interface PredictRequestBody {
  chronic: string;
  surgery: string;
  therapy: string;
  usage: string;
  symptom: string;
  allergy: string;
  age: number | null;
  height: number | null;
  weight: number | null;
  duration: number | null;
  gender: "female" | "male";
  pregnancy: "not_pregnant" | "pregnant" | "unknown";
  top_k_categories?: number;
  top_k_diseases?: number;
}

export interface RankedCategory {
  category: string;
  probability: number;
}

export interface RankedDisease {
  disease: string;
  probability: number;
}

export interface CompositeScore {
  disease: string;
  score: number;
}

export interface PredictResponse {
  categories: RankedCategory[];
  selected_category: string;
  diseases: RankedDisease[];
  composite: CompositeScore[];
  model_version: string;
}

export interface TaxonomyResponse {
  categories: string[];
  diseases: string[];
  membership: Record<string, string[]>;
}
