class ExtractorError(Exception):
    pass


class ModelLoadFailure(ExtractorError):
    pass


class PromptFileMissing(ExtractorError):
    pass
