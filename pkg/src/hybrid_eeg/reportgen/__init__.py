"""Feature JSON, prompts, language-model clients, report generation and verification."""
from .features import REPORT_KEYS, ReportFeatures, amplitude_bucket, build_feature_json, eeg_quality
from .llm import ConfigurationError, HttpChatClient, LlmClient, MockClient, TransportError
from .report import (SECTIONS, GeneratedReport, ReportStructureError, build_prompt, generate_report,
                     structure_problems, template_report, template_report_responder)
from .store import ResultExistsError, atomic_write, result_paths
from .verify import (VerificationResult, batch_agreement, build_verification_prompt,
                     keyword_verifier_responder, majority, parse_vote, verify_report)


def mock_clients() -> tuple[MockClient, list[MockClient]]:
    """Offline generator plus three offline verifiers."""
    gen = MockClient(template_report_responder, "mock-writer")
    vers = [MockClient(keyword_verifier_responder, f"mock-verifier-{i}") for i in range(1, 4)]
    return gen, vers
